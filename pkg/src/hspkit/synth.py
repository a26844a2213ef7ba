"""Deterministic synthetic collector data for tests and demos.

The corpus is a week (by default) of one collector: a RIB dump at the
window start plus update files, encoded with the reference MRT writer.
Roughly one in ten announced prefixes is hyper-specific, a few routes carry
bogons or private origins for the filters to catch, and some anchors carry
an AGGREGATOR.
"""

from __future__ import annotations

import os
import random
from dataclasses import dataclass, field

from .mrt import PathSegment, RecordKind, RouteRecord
from .mrtwrite import MrtWriter
from .prefix import Prefix
from .timeline import DAY

__all__ = ["Corpus", "make_corpus", "write_corpus"]

EPOCH_2021 = 1609459200  # 2021-01-01T00:00:00Z


@dataclass
class Corpus:
    start: int
    days: int
    rib: list = field(default_factory=list)
    updates: list = field(default_factory=list)

    def rib_bytes(self) -> bytes:
        w = MrtWriter()
        w.rib_dump(self.rib, self.start)
        return w.getvalue()

    def update_bytes(self, day: int | None = None) -> bytes:
        w = MrtWriter()
        for rec in self.updates:
            if day is not None and int((rec.timestamp - self.start) // DAY) != day:
                continue
            if rec.kind is RecordKind.WITHDRAWAL:
                w.update(withdrawn=[rec])
            else:
                w.update(announced=[rec])
        return w.getvalue()


def _v4(rng, length):
    bits = rng.randrange(11 << 24, 223 << 24) >> (32 - length) << (32 - length)
    return Prefix(4, bits, length)


def _v6(rng, length):
    bits = (0x2a00 << 112 | rng.getrandbits(100) << 12) >> (128 - length) << (128 - length)
    return Prefix(6, bits, length)


def make_corpus(seed: int = 1, *, feeders: int = 12, prefixes: int = 400, days: int = 7,
                start: int = EPOCH_2021, updates_per_day: int = 60) -> Corpus:
    """Build a reproducible corpus; identical arguments give identical output."""
    rng = random.Random(seed)
    peers = []
    for i in range(feeders):
        asn = 1000 + 7 * i
        addr = f"198.51.100.{i + 1}" if i % 3 else f"2001:db8:ff::{i + 1:x}"
        peers.append((asn, addr))

    routes = []  # (prefix, origin, communities, aggregator, atomic)
    while len(routes) < prefixes:
        family = 4 if rng.random() < 0.8 else 6
        hsp = rng.random() < 0.12
        if family == 4:
            length = rng.choice([25, 26, 27, 28, 29, 30, 31, 32]) if hsp else rng.choice([16, 19, 20, 22, 23, 24, 24, 24])
            p = _v4(rng, length)
        else:
            length = rng.choice([56, 64, 96, 128]) if hsp else rng.choice([32, 36, 40, 44, 48, 48])
            p = _v6(rng, length)
        origin = rng.randrange(2000, 60000)
        comms = []
        r = rng.random()
        if hsp and r < 0.3:
            comms.append((65535, 666))
        elif hsp and r < 0.45:
            comms.append((rng.randrange(1, 64000), 666))
        if rng.random() < 0.2:
            comms.append((65535, 65281))
        if rng.random() < 0.5:
            comms.append((rng.randrange(1, 64000), rng.randrange(1, 1000)))
        agg = None
        atomic = False
        if p.length == (24 if family == 4 else 48) and rng.random() < 0.4:
            agg = (rng.choice([origin, origin, 3356, 64000 + rng.randrange(400)]), "192.0.2.1")
            atomic = rng.random() < 0.2
        routes.append((p, origin, tuple(sorted(set(comms))), agg, atomic))
    # a handful of routes for the filters
    routes.append((Prefix(4, 10 << 24, 8), 3000, (), None, False))
    routes.append((Prefix(4, (192 << 24) | (168 << 16) | (1 << 8), 24), 3001, (), None, False))
    routes.append((_v4(rng, 24), 64512, (), None, False))
    routes.append((_v4(rng, 20), 4200000001, (), None, False))

    def record(ts, peer, route, kind):
        p, origin, comms, agg, atomic = route
        transit = [peer[0]] + [rng.choice([174, 1299, 3356, 6939]) for _ in range(rng.randrange(0, 3))]
        path = (PathSegment.sequence(*transit, origin),) if kind is not RecordKind.WITHDRAWAL else ()
        if kind is RecordKind.WITHDRAWAL:
            return RouteRecord(ts, "", peer[0], peer[1], p, kind)
        if agg is not None and agg[0] == 3356 and 3356 not in transit:
            path = (PathSegment.sequence(peer[0], 3356, origin),)
        return RouteRecord(ts, "", peer[0], peer[1], p, kind, path, comms, agg, atomic)

    corpus = Corpus(start, days)
    installed = set()
    for ri, route in enumerate(routes):
        seen_by = rng.sample(range(feeders), rng.randrange(1, feeders + 1))
        for pi in sorted(seen_by):
            if rng.random() < 0.85:
                corpus.rib.append(record(start, peers[pi], route, RecordKind.RIB_ENTRY))
                installed.add((pi, ri))
    corpus.rib.sort(key=lambda r: (r.prefix, r.peer_asn))

    state = set(installed)
    ts = float(start)
    for _ in range(days * updates_per_day):
        ts += rng.uniform(0, 2 * DAY / updates_per_day)
        if ts >= start + days * DAY:
            break
        pi = rng.randrange(feeders)
        ri = rng.randrange(len(routes))
        if (pi, ri) in state and rng.random() < 0.6:
            corpus.updates.append(record(int(ts), peers[pi], routes[ri], RecordKind.WITHDRAWAL))
            state.discard((pi, ri))
        else:
            corpus.updates.append(record(int(ts), peers[pi], routes[ri], RecordKind.ANNOUNCEMENT))
            state.add((pi, ri))
    return corpus


def write_corpus(directory: str, corpus: Corpus) -> list[str]:
    """Write ``rib.mrt`` and one ``updates.<day>.mrt`` per day; return the paths."""
    os.makedirs(directory, exist_ok=True)
    paths = [os.path.join(directory, "rib.mrt")]
    with open(paths[0], "wb") as fh:
        fh.write(corpus.rib_bytes())
    for day in range(corpus.days):
        path = os.path.join(directory, f"updates.{day:02d}.mrt")
        with open(path, "wb") as fh:
            fh.write(corpus.update_bytes(day))
        paths.append(path)
    return paths
