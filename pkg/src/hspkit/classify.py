"""Use-case hints for hyper-specific prefixes: CIDR buckets, community
labels, aggregation position and scan hit rates."""

from __future__ import annotations

import csv
import enum
import ipaddress
import logging
import os
from collections import Counter
from dataclasses import dataclass
from fractions import Fraction
from typing import Iterable, Optional, Sequence

import numpy as np

from .mrt import AS_TRANS, RouteRecord, SegmentKind, origin_of
from .prefix import Prefix, PrefixError, PrefixTrie, is_hyper_specific

__all__ = [
    "UseCaseHint",
    "CommunityLabel",
    "AggregationPosition",
    "CommunityConfig",
    "ShareStat",
    "ScanRecord",
    "cidr_bucket",
    "classify_communities",
    "load_community_config",
    "community_share_stats",
    "aggregation_position",
    "anchor_position",
    "hit_rate",
    "relative_hit_rate_diff",
    "load_scan_csv",
    "CIDR_GROUPS",
]

log = logging.getLogger(__name__)


class UseCaseHint(enum.Enum):
    TRAFFIC_ENGINEERING = "TrafficEngineering"
    OTHER_V4 = "OtherV4"
    PEERING_SUBNET = "PeeringSubnet"
    BLACKHOLING_V4 = "BlackholingV4"
    REASSIGNMENT = "Reassignment"
    OTHER_V6 = "OtherV6"
    BLACKHOLING_V6 = "BlackholingV6"


# (family, first length, last length, hint), in display order
CIDR_GROUPS = (
    (4, 25, 26, UseCaseHint.TRAFFIC_ENGINEERING),
    (4, 27, 28, UseCaseHint.OTHER_V4),
    (4, 29, 30, UseCaseHint.PEERING_SUBNET),
    (4, 31, 32, UseCaseHint.BLACKHOLING_V4),
    (6, 49, 64, UseCaseHint.REASSIGNMENT),
    (6, 65, 112, UseCaseHint.OTHER_V6),
    (6, 113, 128, UseCaseHint.BLACKHOLING_V6),
)


def cidr_bucket(p: Prefix) -> UseCaseHint:
    if not is_hyper_specific(p):
        raise PrefixError(f"{p} is not hyper-specific")
    for family, lo, hi, hint in CIDR_GROUPS:
        if p.family == family and lo <= p.length <= hi:
            return hint
    raise AssertionError(p)


class CommunityLabel(enum.Enum):
    BLACKHOLE = "Blackhole"
    NO_EXPORT = "NoExport"
    NO_ADVERTISE = "NoAdvertise"
    NO_EXPORT_SUBCONFED = "NoExportSubconfed"
    OTHER = "OtherCommunity"


_WELL_KNOWN = {
    (65535, 666): CommunityLabel.BLACKHOLE,          # RFC 7999
    (65535, 65281): CommunityLabel.NO_EXPORT,
    (65535, 65282): CommunityLabel.NO_ADVERTISE,
    (65535, 65283): CommunityLabel.NO_EXPORT_SUBCONFED,
}


@dataclass(frozen=True)
class CommunityConfig:
    """``x666`` treats any ``X:666`` as blackholing; ``extra`` maps
    operator-specific communities to labels."""

    x666: bool = True
    extra: tuple = ()

    def lookup(self, comm) -> Optional[CommunityLabel]:
        for value, label in self.extra:
            if value == comm:
                return label
        return None


def classify_communities(comms: Iterable[tuple], cfg: CommunityConfig = CommunityConfig()
                         ) -> frozenset:
    labels = set()
    for comm in comms:
        comm = tuple(comm)
        label = _WELL_KNOWN.get(comm) or cfg.lookup(comm)
        if label is None:
            if cfg.x666 and comm[1] == 666:
                label = CommunityLabel.BLACKHOLE
            else:
                label = CommunityLabel.OTHER
        labels.add(label)
    return frozenset(labels)


def load_community_config(source, x666: bool = True) -> CommunityConfig:
    """Parse ``asn:value label`` lines (``#`` comments allowed)."""
    if isinstance(source, (str, os.PathLike)) and os.path.exists(source):
        with open(source, encoding="utf-8") as fh:
            text = fh.read()
    elif hasattr(source, "read"):
        text = source.read()
    else:
        text = source
    extra = []
    for n, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        parts = line.replace(",", " ").split()
        if len(parts) != 2 or ":" not in parts[0]:
            raise ValueError(f"line {n}: expected 'asn:value label'")
        hi, lo = parts[0].split(":", 1)
        try:
            label = CommunityLabel(parts[1])
        except ValueError:
            raise ValueError(f"line {n}: unknown label {parts[1]!r}") from None
        extra.append(((int(hi), int(lo)), label))
    return CommunityConfig(x666, tuple(extra))


# groups reported next to the individual labels
ANY_BH = "AnyBH"
ANY_RES = "AnyRES"
ANY_COMM = "AnyComm"


def _groups(labels: frozenset) -> set:
    names = {label.value for label in labels}
    if CommunityLabel.BLACKHOLE in labels:
        names.add(ANY_BH)
    if labels & {CommunityLabel.NO_EXPORT, CommunityLabel.NO_ADVERTISE}:
        names.add(ANY_RES)
    if labels:
        names.add(ANY_COMM)
    return names


@dataclass(frozen=True)
class ShareStat:
    median: float
    std: float
    shares: tuple


def community_share_stats(snapshots: Sequence[Sequence[frozenset]]):
    """Per-label share of HSPs carrying it: median and (population) standard
    deviation across snapshots.

    ``snapshots`` holds, per snapshot, one label set per HSP. Returns
    ``(stats, skipped)`` where ``stats`` maps each label name plus
    ``AnyBH``/``AnyRES``/``AnyComm`` to a :class:`ShareStat` and ``skipped``
    counts empty snapshots.
    """
    names = [label.value for label in CommunityLabel] + [ANY_BH, ANY_RES, ANY_COMM]
    shares = {name: [] for name in names}
    skipped = 0
    for snap in snapshots:
        if not snap:
            skipped += 1
            continue
        counts = Counter()
        for labels in snap:
            counts.update(_groups(frozenset(labels)))
        for name in names:
            shares[name].append(counts[name] / len(snap))
    out = {}
    for name, vals in shares.items():
        if vals:
            out[name] = ShareStat(float(np.median(vals)), float(np.std(vals)), tuple(vals))
    return out, skipped


class AggregationPosition(enum.Enum):
    ORIGIN = "Origin"
    ON_PATH = "OnPath"
    OFF_PATH = "OffPath"
    EXCLUDED = "Excluded"
    NOT_AGGREGATED = "NotAggregated"
    MULTIPLE = "Multiple"  # anchor level only


def aggregation_position(rec: RouteRecord, warnings: Optional[Counter] = None
                         ) -> AggregationPosition:
    """Where along the path the AGGREGATOR was set.

    Routes with ATOMIC_AGGREGATE or any AS_SET are path-aggregated and come
    back ``EXCLUDED`` whatever the aggregator says.
    """
    path = rec.as_path
    if rec.atomic_aggregate or any(s.kind is SegmentKind.SET for s in path):
        return AggregationPosition.EXCLUDED
    if rec.aggregator is None:
        return AggregationPosition.NOT_AGGREGATED
    agg = rec.aggregator[0]
    if agg == AS_TRANS:
        if warnings is not None:
            warnings["as_trans_aggregator"] += 1
        return AggregationPosition.OFF_PATH
    if agg == origin_of(path):
        return AggregationPosition.ORIGIN
    if any(agg in s.asns for s in path):
        return AggregationPosition.ON_PATH
    return AggregationPosition.OFF_PATH


def anchor_position(positions: Iterable[AggregationPosition]) -> Optional[AggregationPosition]:
    """Combine the route positions of one anchor; None if nothing is left
    after dropping excluded and non-aggregated routes."""
    left = {p for p in positions
            if p not in (AggregationPosition.EXCLUDED, AggregationPosition.NOT_AGGREGATED)}
    if not left:
        return None
    if len(left) == 1:
        return left.pop()
    return AggregationPosition.MULTIPLE


@dataclass(frozen=True)
class ScanRecord:
    protocol: str
    address: int  # IPv4 address as integer
    probed: bool
    responded: bool


def load_scan_csv(source) -> list[ScanRecord]:
    """Read ``protocol,address,probed,responded`` rows (header optional)."""
    if isinstance(source, (str, os.PathLike)):
        with open(source, newline="", encoding="utf-8") as fh:
            return load_scan_csv(fh)
    out = []
    for row in csv.reader(source):
        if not row or row[0].startswith("#") or row[0] == "protocol":
            continue
        proto, addr, probed, responded = (c.strip() for c in row[:4])
        out.append(ScanRecord(proto, int(ipaddress.IPv4Address(addr)),
                              probed in ("1", "true", "True"), responded in ("1", "true", "True")))
    return out


def hit_rate(scan: Iterable[ScanRecord], scope=None) -> dict:
    """Responding / probed hosts per protocol, restricted to ``scope``.

    ``scope`` is a :class:`PrefixTrie`, an iterable of prefixes, or None for
    the whole address space. Protocols with nothing probed in scope map to
    None.
    """
    if scope is not None and not isinstance(scope, PrefixTrie):
        scope = PrefixTrie(scope)
    probed = Counter()
    responded = Counter()
    protocols = set()
    for rec in scan:
        protocols.add(rec.protocol)
        if scope is not None and not scope.covers(Prefix(4, rec.address, 32)):
            continue
        if rec.probed:
            probed[rec.protocol] += 1
            if rec.responded:
                responded[rec.protocol] += 1
    return {proto: (responded[proto] / probed[proto] if probed[proto] else None)
            for proto in sorted(protocols)}


def relative_hit_rate_diff(rate_scope: float, rate_baseline: float) -> float:
    """Signed percent change of a scoped hit rate against a baseline.

    Rates are taken at their shortest decimal form and the arithmetic is
    exact, so (0.001, 0.01) gives -90.0 and not -90.00000000000001.
    """
    if not rate_baseline:
        raise ZeroDivisionError("baseline hit rate is zero")
    scope, base = Fraction(repr(float(rate_scope))), Fraction(repr(float(rate_baseline)))
    return float(100 * (scope - base) / base)
