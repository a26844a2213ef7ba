"""Record filtering: bogon/private/abnormal routes, feeder-internal routes and
timeframe-scoped noisy origins and peers."""

from __future__ import annotations

import csv
import enum
import io
import ipaddress
import os
import statistics
from collections import Counter, defaultdict
from dataclasses import dataclass, field
from datetime import date, datetime, timezone
from importlib import resources
from typing import Iterable, Iterator, Mapping, Optional, Sequence

from .mrt import RecordKind, RouteRecord, hops_of
from .prefix import MAX_LENGTH, Prefix, PrefixTrie, anchor_of, is_hyper_specific, parse_prefix

__all__ = [
    "RuleKind",
    "FilterRule",
    "FilterOutcome",
    "ConfigError",
    "Sanitizer",
    "DelegationIndex",
    "NoisyFlag",
    "apply_filters",
    "load_noise_rules",
    "default_rules",
    "detect_noisy_origins",
    "hsp_counts_by_origin",
    "anchor_counts_by_origin",
]


class RuleKind(enum.Enum):
    PRIVATE_ORIGIN_ASN = "PrivateOriginAsn"
    PRIVATE_OR_RESERVED_PREFIX = "PrivateOrReservedPrefix"
    CLASS_DE = "ClassDE"
    ABNORMAL_LENGTH = "AbnormalLength"
    NO_ORIGIN = "NoOrigin"
    FEEDER_INTERNAL = "FeederInternal"
    NOISY_ORIGIN = "NoisyOrigin"
    NOISY_PEER = "NoisyPeer"
    UNALLOCATED_RESOURCE = "UnallocatedResource"


# rules that only ever concern hyper-specific routes
_HSP_ONLY = {RuleKind.FEEDER_INTERNAL, RuleKind.NOISY_ORIGIN, RuleKind.NOISY_PEER}
_ASN_KINDS = {RuleKind.PRIVATE_ORIGIN_ASN, RuleKind.NOISY_ORIGIN, RuleKind.NOISY_PEER}
_PREFIX_KINDS = {RuleKind.PRIVATE_OR_RESERVED_PREFIX, RuleKind.CLASS_DE}


class ConfigError(ValueError):
    pass


def _epoch(d: date) -> float:
    return datetime(d.year, d.month, d.day, tzinfo=timezone.utc).timestamp()


@dataclass(frozen=True)
class FilterRule:
    """One configured rule. ``timeframes`` empty means the entire period;
    each timeframe is a ``[start, end)`` pair of dates."""

    id: str
    kind: RuleKind
    params: tuple = ()
    timeframes: tuple = ()
    family: Optional[int] = None
    action: str = "drop"
    _bounds: tuple = field(init=False, repr=False, compare=False, default=())
    _trie: object = field(init=False, repr=False, compare=False, default=None)

    def __post_init__(self):
        if self.action not in ("drop", "keep"):
            raise ConfigError(f"rule {self.id}: unknown action {self.action!r}")
        for start, end in self.timeframes:
            if not start < end:
                raise ConfigError(f"rule {self.id}: empty timeframe {start}..{end}")
        object.__setattr__(self, "_bounds",
                           tuple((_epoch(s), _epoch(e)) for s, e in self.timeframes))
        if self.kind in _PREFIX_KINDS:
            object.__setattr__(self, "_trie", PrefixTrie(self.params))

    def active_at(self, ts: float) -> bool:
        if not self._bounds:
            return True
        return any(lo <= ts < hi for lo, hi in self._bounds)

    def matches(self, rec: RouteRecord, feeder_asn: int) -> bool:
        if self.family is not None and rec.prefix.family != self.family:
            return False
        if not self.active_at(rec.timestamp):
            return False
        kind = self.kind
        routed = rec.kind is not RecordKind.WITHDRAWAL
        if kind in _HSP_ONLY and not is_hyper_specific(rec.prefix):
            return False

        if kind is RuleKind.PRIVATE_ORIGIN_ASN or kind is RuleKind.NOISY_ORIGIN:
            origin = rec.origin_asn
            return routed and origin is not None and _in_ranges(origin, self.params)
        if kind is RuleKind.NOISY_PEER:
            return _in_ranges(rec.peer_asn, self.params)
        if kind in _PREFIX_KINDS:
            return self._trie.covers(rec.prefix)
        if kind is RuleKind.ABNORMAL_LENGTH:
            return rec.length > MAX_LENGTH[rec.prefix.family]
        if kind is RuleKind.NO_ORIGIN:
            return routed and rec.origin_asn is None
        if kind is RuleKind.FEEDER_INTERNAL:
            return routed and rec.origin_asn == feeder_asn and hops_of(rec.as_path) < 2
        if kind is RuleKind.UNALLOCATED_RESOURCE:
            index = self.params[0]
            if not index.has_prefix(rec.prefix):
                return True
            origin = rec.origin_asn
            return routed and origin is not None and not index.has_asn(origin)
        raise AssertionError(kind)


@dataclass(frozen=True)
class FilterOutcome:
    kept: bool
    reason: Optional[RuleKind] = None
    rule_id: Optional[str] = None


KEPT = FilterOutcome(True)


def _in_ranges(asn: int, ranges) -> bool:
    for lo, hi in ranges:
        if lo <= asn <= hi:
            return True
    return False


def apply_filters(rec: RouteRecord, rules: Sequence[FilterRule],
                  feeder_asn: Optional[int] = None) -> FilterOutcome:
    """Evaluate ``rules`` in order; the first match decides.

    ``feeder_asn`` defaults to the record's peer ASN. A matching ``keep``
    rule ends evaluation with the record kept.
    """
    if feeder_asn is None:
        feeder_asn = rec.peer_asn
    for rule in rules:
        if rule.matches(rec, feeder_asn):
            if rule.action == "keep":
                return KEPT
            return FilterOutcome(False, rule.kind, rule.id)
    return KEPT


class Sanitizer:
    """Applies a rule list to a record stream and keeps per-rule accounting."""

    def __init__(self, rules: Sequence[FilterRule]):
        self.rules = list(rules)
        self.total = 0
        self.kept = 0
        self.dropped = Counter()       # rule id -> count
        self.dropped_kind = Counter()  # RuleKind -> count
        self._cache = {}

    def _candidates(self, rec: RouteRecord) -> list:
        """Rules that can match ``rec``; timeframes end on UTC day boundaries,
        so the list only depends on family, HSP-ness and day."""
        hsp = is_hyper_specific(rec.prefix)
        day = int(rec.timestamp // 86400)
        key = (rec.prefix.family, hsp, day)
        rules = self._cache.get(key)
        if rules is None:
            lo, hi = day * 86400, (day + 1) * 86400
            rules = [r for r in self.rules
                     if (r.family is None or r.family == key[0])
                     and (hsp or r.kind not in _HSP_ONLY)
                     and (not r._bounds or any(a < hi and lo < b for a, b in r._bounds))]
            if len(self._cache) > 4096:
                self._cache.clear()
            self._cache[key] = rules
        return rules

    def check(self, rec: RouteRecord) -> FilterOutcome:
        out = apply_filters(rec, self._candidates(rec))
        self.total += 1
        if out.kept:
            self.kept += 1
        else:
            self.dropped[out.rule_id] += 1
            self.dropped_kind[out.reason] += 1
        return out

    def filter(self, records: Iterable[RouteRecord]) -> Iterator[RouteRecord]:
        for rec in records:
            if self.check(rec).kept:
                yield rec

    def balanced(self) -> bool:
        return self.kept + sum(self.dropped.values()) == self.total


# -- configuration --------------------------------------------------------

def _parse_asn(text: str) -> int:
    text = text.strip().upper()
    if text.startswith("AS"):
        text = text[2:]
    if "." in text:
        hi, lo = text.split(".")
        return (int(hi) << 16) + int(lo)
    return int(text)


def _parse_params(kind: RuleKind, text: str, base_dir: str):
    tokens = text.split()
    if kind in _ASN_KINDS:
        if not tokens:
            raise ConfigError(f"{kind.value} needs at least one ASN")
        ranges = []
        for tok in tokens:
            if "-" in tok:
                lo, hi = tok.split("-", 1)
                ranges.append((_parse_asn(lo), _parse_asn(hi)))
            else:
                asn = _parse_asn(tok)
                ranges.append((asn, asn))
        return tuple(ranges)
    if kind in _PREFIX_KINDS:
        if not tokens:
            raise ConfigError(f"{kind.value} needs at least one prefix")
        return tuple(parse_prefix(t) for t in tokens)
    if kind is RuleKind.UNALLOCATED_RESOURCE:
        paths = [t if os.path.isabs(t) else os.path.join(base_dir, t) for t in tokens]
        if not paths:
            raise ConfigError("UnallocatedResource needs delegation file paths")
        return (DelegationIndex.from_files(paths),)
    if tokens:
        raise ConfigError(f"{kind.value} takes no parameters")
    return ()


def _read_rows(source):
    if hasattr(source, "read"):
        return source.read(), "."
    if isinstance(source, str) and "\n" not in source and os.path.exists(source):
        with open(source, encoding="utf-8") as fh:
            return fh.read(), os.path.dirname(os.path.abspath(source))
    if isinstance(source, os.PathLike):
        with open(source, encoding="utf-8") as fh:
            return fh.read(), os.path.dirname(os.path.abspath(source))
    return source, "."


def load_noise_rules(source) -> list[FilterRule]:
    """Load a rule table (path, file object or CSV text).

    Columns: ``kind,param,start,end[,family[,action[,id]]]``. A header line
    starting with ``kind`` and ``#`` comments are ignored. Rows sharing an
    id are merged into one multi-timeframe rule. Raises :class:`ConfigError`
    on malformed rows or on contradictory rules (same kind and target,
    overlapping timeframes, different actions).
    """
    text, base_dir = _read_rows(source)
    lines = [ln for ln in io.StringIO(text) if ln.strip() and not ln.lstrip().startswith("#")]
    grouped = {}
    order = []
    for n, row in enumerate(csv.reader(lines), 1):
        row = [c.strip() for c in row]
        if row[0] == "kind":
            continue
        row += [""] * (7 - len(row))
        kind_text, param, start, end, family, action, rule_id = row[:7]
        try:
            kind = RuleKind(kind_text)
        except ValueError:
            raise ConfigError(f"row {n}: unknown rule kind {kind_text!r}") from None
        if bool(start) != bool(end):
            raise ConfigError(f"row {n}: timeframe needs both start and end")
        try:
            frame = (date.fromisoformat(start), date.fromisoformat(end)) if start else None
            fam = int(family) if family else None
        except ValueError as exc:
            raise ConfigError(f"row {n}: {exc}") from None
        if fam not in (None, 4, 6):
            raise ConfigError(f"row {n}: bad family {family!r}")
        action = action or "drop"
        rule_id = rule_id or f"{kind.value}-{n}"
        key = (kind, param, fam, action)
        if rule_id in grouped:
            prev_key, frames = grouped[rule_id]
            if prev_key != key:
                raise ConfigError(f"row {n}: rule id {rule_id!r} reused with different content")
            if frame is None or None in frames:
                raise ConfigError(f"row {n}: rule {rule_id!r} mixes entire-period and timeframes")
            frames.append(frame)
        else:
            grouped[rule_id] = (key, [frame])
            order.append(rule_id)

    rules = []
    for rule_id in order:
        (kind, param, fam, action), frames = grouped[rule_id]
        frames = () if frames == [None] else tuple(frames)
        try:
            params = _parse_params(kind, param, base_dir)
        except (ValueError, OSError) as exc:
            raise ConfigError(f"rule {rule_id}: {exc}") from None
        rules.append(FilterRule(rule_id, kind, params, frames, fam, action))
    _check_contradictions(rules)
    return rules


def _frames_overlap(a: FilterRule, b: FilterRule) -> bool:
    if not a.timeframes or not b.timeframes:
        return True
    return any(s1 < e2 and s2 < e1 for s1, e1 in a.timeframes for s2, e2 in b.timeframes)


def _params_overlap(a: FilterRule, b: FilterRule) -> bool:
    if a.kind in _ASN_KINDS:
        return any(l1 <= h2 and l2 <= h1 for l1, h1 in a.params for l2, h2 in b.params)
    if a.kind in _PREFIX_KINDS:
        return any(p.contains(q) or q.contains(p) for p in a.params for q in b.params)
    return True


def _check_contradictions(rules: Sequence[FilterRule]) -> None:
    for i, a in enumerate(rules):
        for b in rules[i + 1:]:
            if a.kind is not b.kind or a.action == b.action:
                continue
            if a.family is not None and b.family is not None and a.family != b.family:
                continue
            if _frames_overlap(a, b) and _params_overlap(a, b):
                raise ConfigError(f"rules {a.id!r} and {b.id!r} contradict each other")


def default_rules(include_v6_bogons: bool = True) -> list[FilterRule]:
    """The bundled rule table (see ``data/default_rules.csv``)."""
    text = resources.files("hspkit").joinpath("data/default_rules.csv").read_text("utf-8")
    rules = load_noise_rules(text)
    if not include_v6_bogons:
        rules = [r for r in rules if r.id != "private-ips-v6"]
    return rules


# -- delegation files -----------------------------------------------------

class DelegationIndex:
    """Allocated/assigned resources from RIR delegation (``delegated-*``) files."""

    ALLOCATED = ("allocated", "assigned")

    def __init__(self):
        self.prefixes = PrefixTrie()
        self.asn_ranges = []

    @classmethod
    def from_files(cls, paths: Iterable[str]) -> "DelegationIndex":
        index = cls()
        for path in paths:
            with open(path, encoding="utf-8") as fh:
                index.add_lines(fh)
        index.asn_ranges.sort()
        return index

    def add_lines(self, lines: Iterable[str]) -> None:
        for line in lines:
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            parts = line.split("|")
            if len(parts) < 7 or parts[6] not in self.ALLOCATED:
                continue
            rtype, start, value = parts[2], parts[3], parts[4]
            if rtype == "ipv4":
                first = ipaddress.IPv4Address(start)
                last = first + int(value) - 1
                for net in ipaddress.summarize_address_range(first, last):
                    self.prefixes.insert(Prefix(4, int(net.network_address), net.prefixlen))
            elif rtype == "ipv6":
                net = ipaddress.IPv6Network(f"{start}/{value}")
                self.prefixes.insert(Prefix(6, int(net.network_address), net.prefixlen))
            elif rtype == "asn":
                lo = int(start)
                self.asn_ranges.append((lo, lo + int(value) - 1))

    def has_prefix(self, p: Prefix) -> bool:
        return self.prefixes.covers(p)

    def has_asn(self, asn: int) -> bool:
        return _in_ranges(asn, self.asn_ranges)


# -- noisy origin detection -----------------------------------------------

@dataclass(frozen=True)
class NoisyFlag:
    origin: int
    snapshot: int
    count: int
    baseline: float


def detect_noisy_origins(snapshots: Sequence[Mapping[int, int]],
                         factor: float = 100) -> list[NoisyFlag]:
    """Flag (origin, snapshot) pairs whose count is at least ``factor`` times
    the median of that origin's counts in all other snapshots.

    Snapshots where an origin is absent count as zero; the baseline is
    floored at 1 so an origin appearing from nowhere needs ``factor`` items.
    """
    if len(snapshots) < 2:
        return []
    origins = set()
    for snap in snapshots:
        origins.update(snap)
    flags = []
    for origin in sorted(origins):
        counts = [snap.get(origin, 0) for snap in snapshots]
        for i, count in enumerate(counts):
            if count == 0:
                continue
            others = counts[:i] + counts[i + 1:]
            baseline = max(statistics.median(others), 1)
            if count >= factor * baseline:
                flags.append(NoisyFlag(origin, i, count, baseline))
    return flags


def hsp_counts_by_origin(records: Iterable[RouteRecord]) -> Counter:
    """Distinct HSPs per origin ASN."""
    seen = defaultdict(set)
    for rec in records:
        if rec.kind is RecordKind.WITHDRAWAL or not is_hyper_specific(rec.prefix):
            continue
        if rec.origin_asn is not None:
            seen[rec.origin_asn].add(rec.prefix)
    return Counter({asn: len(ps) for asn, ps in seen.items()})


def anchor_counts_by_origin(records: Iterable[RouteRecord]) -> Counter:
    """Distinct anchor prefixes containing an HSP, per origin ASN."""
    seen = defaultdict(set)
    for rec in records:
        if rec.kind is RecordKind.WITHDRAWAL or not is_hyper_specific(rec.prefix):
            continue
        if rec.origin_asn is not None:
            seen[rec.origin_asn].add(anchor_of(rec.prefix))
    return Counter({asn: len(ps) for asn, ps in seen.items()})
