"""Random RouteRecord generators for round-trip and property tests."""

import ipaddress

from hspkit.mrt import PathSegment, RecordKind, RouteRecord, SegmentKind
from hspkit.prefix import Prefix


def rand_prefix(rng, family=None, length=None):
    family = family or rng.choice([4, 6])
    width = 32 if family == 4 else 128
    if length is None:
        length = rng.randint(0, width)
    bits = rng.getrandbits(width) >> (width - length) << (width - length) if length else 0
    return Prefix(family, bits, length)


def rand_path(rng, two_byte=False, allow_sets=True):
    segs = []
    big = not two_byte or rng.random() < 0.5
    for _ in range(rng.randint(0, 4)):
        n = rng.randint(1, 6)
        asns = tuple(rng.choice([rng.randint(1, 65535), rng.randint(65536, 2 ** 32 - 1) if big else 7])
                     for _ in range(n))
        if allow_sets and rng.random() < 0.2:
            segs.append(PathSegment(SegmentKind.SET, asns))
        elif segs and segs[-1].kind is SegmentKind.SEQUENCE:
            segs[-1] = PathSegment(SegmentKind.SEQUENCE, segs[-1].asns + asns)
        else:
            segs.append(PathSegment(SegmentKind.SEQUENCE, asns))
    return tuple(segs)


def rand_peer(rng, two_byte=False):
    asn = rng.randint(1, 65535) if two_byte else rng.randint(1, 2 ** 32 - 1)
    if rng.random() < 0.5:
        addr = str(ipaddress.IPv4Address(rng.getrandbits(32)))
    else:
        addr = str(ipaddress.IPv6Address(rng.getrandbits(128)))
    return asn, addr


def rand_record(rng, kind=RecordKind.ANNOUNCEMENT, ts=None, two_byte=False, family=None,
                extended=False, collector="rc"):
    peer_asn, peer_addr = rand_peer(rng, two_byte)
    prefix = rand_prefix(rng, family)
    if ts is None:
        ts = float(rng.randint(1_000_000_000, 1_900_000_000))
        if extended:
            ts = ts + rng.randint(0, 999_999) / 1e6
    if kind is RecordKind.WITHDRAWAL:
        return RouteRecord(ts, collector, peer_asn, peer_addr, prefix, kind)
    agg = None
    if rng.random() < 0.3:
        agg = (rng.choice([rng.randint(1, 65535), rng.randint(65536, 2 ** 32 - 1)]),
               str(ipaddress.IPv4Address(rng.getrandbits(32))))
        if two_byte and agg[0] == 23456:
            agg = None
    comms = tuple((rng.randint(0, 65535), rng.randint(0, 65535)) for _ in range(rng.randint(0, 3)))
    large = tuple((rng.getrandbits(32), rng.getrandbits(32), rng.getrandbits(32))
                  for _ in range(rng.randint(0, 2)))
    ext = tuple(rng.getrandbits(64) for _ in range(rng.randint(0, 2)))
    path = rand_path(rng, two_byte)
    if two_byte:
        # AS4_PATH reconstruction needs AS_TRANS free 2-byte ASNs to be unambiguous
        path = tuple(PathSegment(s.kind, tuple(23457 if a == 23456 else a for a in s.asns)) for s in path)
    return RouteRecord(ts, collector, peer_asn, peer_addr, prefix, kind, path, comms, agg,
                       rng.random() < 0.2, large, ext)
