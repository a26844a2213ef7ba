"""Routing-table replay and per-prefix visibility/consistency statistics."""

from __future__ import annotations

import csv
import math
from collections import defaultdict
from dataclasses import dataclass
from datetime import date, datetime, timezone
from fractions import Fraction
from typing import Iterable, Optional, Sequence

import numpy as np

from .mrt import RecordKind, RouteRecord
from .prefix import Prefix

__all__ = [
    "ObservationWindow",
    "PresenceInterval",
    "Gap",
    "ReplayStats",
    "PrefixStat",
    "WindowConsistency",
    "Heatmap",
    "replay",
    "visibility",
    "visibility_map",
    "consistency",
    "prefix_stats",
    "window_consistency",
    "heatmap_bins",
    "write_intervals_csv",
    "write_heatmap_csv",
]

DAY = 86400


@dataclass(frozen=True)
class ObservationWindow:
    start: float
    end: float

    def __post_init__(self):
        if not self.start < self.end:
            raise ValueError("observation window must have start < end")

    @property
    def length(self) -> float:
        return self.end - self.start

    @classmethod
    def from_dates(cls, first: date, days: int) -> "ObservationWindow":
        start = datetime(first.year, first.month, first.day, tzinfo=timezone.utc).timestamp()
        return cls(start, start + days * DAY)


@dataclass(frozen=True, order=True)
class PresenceInterval:
    prefix: Prefix
    feeder: tuple  # (peer_asn, peer_address)
    start: float
    end: float
    # an endpoint was imposed by a data gap rather than observed
    uncertain: bool = False

    @property
    def duration(self) -> float:
        return self.end - self.start


@dataclass(frozen=True)
class Gap:
    """Missing update data in ``[start, end)``; ``rib`` re-seeds state at ``end``."""

    start: float
    end: float
    rib: tuple = ()


@dataclass
class ReplayStats:
    rib_entries: int = 0
    announcements: int = 0
    withdrawals: int = 0
    absent_withdrawals: int = 0
    late_updates: int = 0
    gap_updates: int = 0


def replay(ribs: Iterable[RouteRecord], updates: Iterable[RouteRecord],
           window: ObservationWindow, *, gaps: Sequence[Gap] = (),
           stats: Optional[ReplayStats] = None) -> list[PresenceInterval]:
    """Replay a RIB snapshot plus updates into presence intervals.

    State is kept per BGP session (peer ASN and address) and prefix. RIB
    entries seed state at ``window.start``. Announcing an installed prefix
    is a no-op for presence; a withdrawal closes the interval; the window
    end closes everything still open. Several events at one timestamp
    resolve to the state after the last of them, so no zero-length or
    touching intervals are produced.

    Updates before the window start raise ``ValueError``; updates at or
    after the window end are ignored.
    """
    if stats is None:
        stats = ReplayStats()
    open_at = {}                  # key -> [start, uncertain]
    done = defaultdict(list)      # key -> [[start, end, uncertain], ...]

    def announce(key, t, uncertain=False):
        if key in open_at:
            return
        runs = done.get(key)
        if runs and runs[-1][1] == t and not runs[-1][2]:
            start, _, unc = runs.pop()
            open_at[key] = [start, unc]
        else:
            open_at[key] = [t, uncertain]

    def close(key, t, uncertain=False):
        start, unc = open_at.pop(key)
        if start < t:
            done[key].append([start, t, unc or uncertain])

    for rec in ribs:
        stats.rib_entries += 1
        announce((rec.feeder, rec.prefix), window.start)

    events = []
    prev_end = window.start
    for g in sorted(gaps, key=lambda g: g.start):
        if not (window.start <= g.start < g.end <= window.end):
            raise ValueError(f"gap {g.start}..{g.end} outside the observation window")
        if g.start < prev_end:
            raise ValueError("overlapping gaps")
        prev_end = g.end
        events.append((g.end, 0, g))
        events.append((g.start, 1, g))
    events.sort(key=lambda e: (e[0], e[1]))

    ups = sorted(updates, key=lambda r: r.timestamp)
    if ups and ups[0].timestamp < window.start:
        raise ValueError(f"update at {ups[0].timestamp} precedes window start {window.start}")

    in_gap = None
    ei = 0
    for rec in ups:
        t = rec.timestamp
        while ei < len(events) and events[ei][0] <= t:
            ts, kind, g = events[ei]
            ei += 1
            if kind == 1:
                for key in list(open_at):
                    close(key, ts, uncertain=True)
                in_gap = g
            else:
                in_gap = None
                for seed in g.rib:
                    announce((seed.feeder, seed.prefix), ts, uncertain=True)
        if t >= window.end:
            stats.late_updates += 1
            continue
        if in_gap is not None:
            stats.gap_updates += 1
            continue
        key = (rec.feeder, rec.prefix)
        if rec.kind is RecordKind.WITHDRAWAL:
            stats.withdrawals += 1
            if key in open_at:
                close(key, t)
            else:
                stats.absent_withdrawals += 1
        else:
            stats.announcements += 1
            announce(key, t)

    for ts, kind, g in events[ei:]:
        if kind == 1:
            for key in list(open_at):
                close(key, ts, uncertain=True)
        else:
            for seed in g.rib:
                announce((seed.feeder, seed.prefix), ts, uncertain=True)
    for key in list(open_at):
        close(key, window.end)

    out = []
    for (feeder, prefix), runs in done.items():
        for start, end, unc in runs:
            out.append(PresenceInterval(prefix, feeder, start, end, unc))
    out.sort()
    return out


def visibility(prefix: Prefix, intervals: Iterable[PresenceInterval]) -> int:
    """Distinct feeder ASes (not sessions) with presence for ``prefix``."""
    return len({iv.feeder[0] for iv in intervals if iv.prefix == prefix})


def visibility_map(intervals: Iterable[PresenceInterval]) -> dict:
    seen = defaultdict(set)
    for iv in intervals:
        seen[iv.prefix].add(iv.feeder[0])
    return {p: len(asns) for p, asns in seen.items()}


def _union_length(spans, lo, hi) -> float:
    total = 0.0
    cur_s = cur_e = None
    for s, e in sorted((max(s, lo), min(e, hi)) for s, e in spans):
        if e <= s:
            continue
        if cur_e is None or s > cur_e:
            if cur_e is not None:
                total += cur_e - cur_s
            cur_s, cur_e = s, e
        elif e > cur_e:
            cur_e = e
    if cur_e is not None:
        total += cur_e - cur_s
    return total


def consistency(prefix: Prefix, intervals: Iterable[PresenceInterval],
                window: ObservationWindow) -> float:
    """Fraction of the window during which any feeder had ``prefix`` installed."""
    spans = [(iv.start, iv.end) for iv in intervals if iv.prefix == prefix]
    return _union_length(spans, window.start, window.end) / window.length


@dataclass(frozen=True)
class PrefixStat:
    prefix: Prefix
    visibility: int
    present_seconds: float
    consistency: float


def prefix_stats(intervals: Iterable[PresenceInterval],
                 window: ObservationWindow) -> dict:
    """Visibility and consistency for every prefix with at least one interval."""
    spans = defaultdict(list)
    feeders = defaultdict(set)
    for iv in intervals:
        spans[iv.prefix].append((iv.start, iv.end))
        feeders[iv.prefix].add(iv.feeder[0])
    out = {}
    for p, sp in spans.items():
        covered = _union_length(sp, window.start, window.end)
        out[p] = PrefixStat(p, len(feeders[p]), covered, covered / window.length)
    return out


@dataclass(frozen=True)
class WindowConsistency:
    window: int
    fractions: tuple  # per start position n; None where the target day was empty
    mean: float
    q25: float
    q75: float
    skipped: int

    @property
    def iqr(self) -> float:
        return self.q75 - self.q25


def window_consistency(daily_sets: Sequence[set], w: int) -> WindowConsistency:
    """Share of the prefixes seen on day ``n+w+1`` that were also seen on
    some day in ``[n, n+w]``, for every start position ``n``.

    Positions run over ``n = 0 .. d-w-2`` for ``d`` days (the last target
    day is the last available day).
    """
    d = len(daily_sets)
    if w < 0 or d < w + 2:
        raise ValueError(f"need at least w+2={w + 2} days, got {d}")
    fractions, exact = [], []
    for n in range(d - w - 1):
        target = daily_sets[n + w + 1]
        if not target:
            fractions.append(None)
            continue
        seen = set().union(*daily_sets[n:n + w + 1])
        exact.append(Fraction(len(target & seen), len(target)))
        fractions.append(float(exact[-1]))
    if exact:
        mean = float(sum(exact) / len(exact))  # exact rational mean, rounded once
        q25, q75 = (float(x) for x in np.percentile([float(x) for x in exact], [25, 75]))
    else:
        mean = q25 = q75 = float("nan")
    return WindowConsistency(w, tuple(fractions), mean, q25, q75, fractions.count(None))


@dataclass
class Heatmap:
    """HSP counts; rows are visibility groups, columns consistency cells.

    Row ``g`` holds prefixes seen by ``g*feeder_group+1 .. (g+1)*feeder_group``
    feeder ASes; column ``c`` prefixes present for ``(c, c+1]`` cells of
    ``time_cell_days`` days.
    """

    counts: np.ndarray
    feeder_group: int
    time_cell_days: float

    def cell(self, group: int, cell: int) -> int:
        """Count in 1-based (visibility group, time cell)."""
        return int(self.counts[group - 1, cell - 1])


def _bucket(x: float, size: float) -> int:
    return max(1, math.ceil(round(x / size, 9)))


def heatmap_bins(stats: Iterable[PrefixStat], window: ObservationWindow, *,
                 feeder_group: int = 10, time_cell_days: float = 14,
                 max_visibility: Optional[int] = None) -> Heatmap:
    stats = list(stats)
    cell_len = time_cell_days * DAY
    n_cells = _bucket(window.length, cell_len)
    if max_visibility is None:
        max_visibility = max((s.visibility for s in stats), default=1)
    n_groups = _bucket(max_visibility, feeder_group)
    counts = np.zeros((n_groups, n_cells), dtype=np.int64)
    for s in stats:
        g = min(_bucket(s.visibility, feeder_group), n_groups)
        c = min(_bucket(s.present_seconds, cell_len), n_cells)
        counts[g - 1, c - 1] += 1
    return Heatmap(counts, feeder_group, time_cell_days)


def _fmt_ts(t: float) -> str:
    return f"{t:.6f}"


def write_intervals_csv(intervals: Iterable[PresenceInterval], fh) -> None:
    w = csv.writer(fh, lineterminator="\n")
    w.writerow(["prefix", "feeder_asn", "start", "end", "feeder_address", "uncertain"])
    for iv in sorted(intervals):
        w.writerow([str(iv.prefix), iv.feeder[0], _fmt_ts(iv.start), _fmt_ts(iv.end),
                    iv.feeder[1], int(iv.uncertain)])


def write_heatmap_csv(hm: Heatmap, fh) -> None:
    w = csv.writer(fh, lineterminator="\n")
    n_groups, n_cells = hm.counts.shape
    w.writerow(["visibility_group"] + [f"cell_{c + 1}" for c in range(n_cells)])
    for g in range(n_groups):
        lo, hi = g * hm.feeder_group + 1, (g + 1) * hm.feeder_group
        w.writerow([f"{lo}-{hi}"] + [int(x) for x in hm.counts[g]])
