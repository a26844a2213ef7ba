"""IRR route objects, validated ROAs, origin validation and cross-dataset
attribution of HSP origins and anchors."""

from __future__ import annotations

import csv
import enum
import os
from collections import Counter
from dataclasses import dataclass
from datetime import date
from typing import Iterable, Mapping, Optional

from .prefix import (MAX_LENGTH, Prefix, PrefixError, PrefixTrie, anchor_of,
                     is_hyper_specific, parse_prefix)

__all__ = [
    "RoaRecord",
    "IrrRouteObject",
    "RoaHspKind",
    "RovStatus",
    "OriginAttribution",
    "AnchorSource",
    "RoaIndex",
    "RpslStats",
    "roa_hsp_kind",
    "rov_validate",
    "load_roa_csv",
    "parse_rpsl",
    "attribute_origins",
    "attribution_counts",
    "anchor_dataset_attribution",
    "hsp_anchors",
    "explicit_roa_origins",
    "explicit_roa_anchors",
]


@dataclass(frozen=True, order=True)
class RoaRecord:
    prefix: Prefix
    max_length: int
    asn: int
    snapshot_date: Optional[date] = None

    def __post_init__(self):
        if not self.prefix.length <= self.max_length <= MAX_LENGTH[self.prefix.family]:
            raise ValueError(f"max length {self.max_length} invalid for {self.prefix}")


@dataclass(frozen=True, order=True)
class IrrRouteObject:
    prefix: Prefix
    origin_asn: int
    source_db: str = ""
    snapshot_date: Optional[date] = None


class RoaHspKind(enum.Enum):
    EXPLICIT = "Explicit"
    IMPLICIT = "Implicit"
    NON_HSP = "NonHsp"


def roa_hsp_kind(roa: RoaRecord) -> RoaHspKind:
    """Explicit: every prefix the ROA allows is hyper-specific.
    Implicit: only its maximum length reaches into HSP territory."""
    if is_hyper_specific(roa.prefix):
        return RoaHspKind.EXPLICIT
    if is_hyper_specific(Prefix(roa.prefix.family, 0, roa.max_length)):
        return RoaHspKind.IMPLICIT
    return RoaHspKind.NON_HSP


class RovStatus(enum.Enum):
    NOT_FOUND = "NotFound"
    VALID = "Valid"
    INVALID_LENGTH = "InvalidLength"
    INVALID_ORIGIN = "InvalidOrigin"
    INVALID_BOTH = "InvalidBoth"

    @property
    def collapsed(self) -> str:
        """The plain origin-validation state: Valid, Invalid or NotFound."""
        if self.value.startswith("Invalid"):
            return "Invalid"
        return self.value


class RoaIndex:
    """ROAs indexed by prefix for covering lookups."""

    def __init__(self, roas: Iterable[RoaRecord] = ()):
        self._trie = PrefixTrie()
        self._roas = {}
        for roa in roas:
            self.add(roa)

    def add(self, roa: RoaRecord) -> None:
        self._trie.insert(roa.prefix)
        self._roas.setdefault(roa.prefix, set()).add((roa.max_length, roa.asn))

    def __len__(self) -> int:
        return sum(len(v) for v in self._roas.values())

    def covering(self, p: Prefix) -> list[tuple[int, int]]:
        """(max_length, asn) of every ROA whose prefix covers ``p``."""
        out = []
        for q, _ in self._trie.covering(p):
            out.extend(sorted(self._roas[q]))
        return out


def rov_validate(prefix: Prefix, origin: int, roas) -> RovStatus:
    """Origin validation with the invalid state split by cause.

    With several covering ROAs the best outcome wins:
    Valid > InvalidLength > InvalidOrigin > InvalidBoth.
    """
    if not isinstance(roas, RoaIndex):
        roas = RoaIndex(roas)
    covering = roas.covering(prefix)
    if not covering:
        return RovStatus.NOT_FOUND
    length_ok_any = origin_ok_any = False
    for max_length, asn in covering:
        length_ok = prefix.length <= max_length
        # AS0 ROAs never authorize an origin
        origin_ok = asn != 0 and asn == origin
        if length_ok and origin_ok:
            return RovStatus.VALID
        length_ok_any |= length_ok
        origin_ok_any |= origin_ok
    if origin_ok_any:
        return RovStatus.INVALID_LENGTH
    if length_ok_any:
        return RovStatus.INVALID_ORIGIN
    return RovStatus.INVALID_BOTH


def _asn(text: str) -> int:
    text = text.strip().upper()
    if text.startswith("AS"):
        text = text[2:]
    if "." in text:
        hi, lo = text.split(".")
        return (int(hi) << 16) + int(lo)
    return int(text)


def load_roa_csv(source, snapshot_date: Optional[date] = None) -> list[RoaRecord]:
    """Validated ROA dump with columns ``prefix,max_length,asn[,date]``.

    A header row and ``#`` comments are skipped; ASNs may carry an ``AS``
    prefix; an empty max length means the prefix length.
    """
    if isinstance(source, (str, os.PathLike)):
        with open(source, newline="", encoding="utf-8") as fh:
            return load_roa_csv(fh, snapshot_date)
    out = []
    for n, row in enumerate(csv.reader(source), 1):
        if not row or row[0].lstrip().startswith("#") or row[0].strip().lower() == "prefix":
            continue
        try:
            prefix = parse_prefix(row[0].strip())
            max_length = int(row[1]) if len(row) > 1 and row[1].strip() else prefix.length
            asn = _asn(row[2])
            day = date.fromisoformat(row[3].strip()) if len(row) > 3 and row[3].strip() else snapshot_date
            out.append(RoaRecord(prefix, max_length, asn, day))
        except (ValueError, IndexError) as exc:
            raise ValueError(f"ROA row {n}: {exc}") from None
    return out


@dataclass
class RpslStats:
    objects: int = 0
    routes: int = 0
    missing_origin: int = 0
    bad_prefix: int = 0
    duplicates: int = 0


def _rpsl_objects(lines):
    obj = []
    last = None
    for raw in lines:
        line = raw.rstrip("\r\n")
        if not line.strip():
            if obj:
                yield obj
            obj, last = [], None
            continue
        if line.startswith(("%", "#")):
            continue
        if line[0] in " \t+":
            # continuation of the previous attribute
            if last is not None:
                cont = line[1:] if line[0] == "+" else line
                obj[last][1] += " " + cont.split("#", 1)[0].strip()
            continue
        name, sep, value = line.partition(":")
        if not sep:
            continue
        obj.append([name.strip().lower(), value.split("#", 1)[0].strip()])
        last = len(obj) - 1
    if obj:
        yield obj


def parse_rpsl(text, source_db: str = "", snapshot_date: Optional[date] = None,
               stats: Optional[RpslStats] = None) -> list[IrrRouteObject]:
    """Extract route/route6 objects with their origin from an RPSL dump.

    Other object classes are ignored. Objects without an origin or with an
    unparsable prefix are skipped and counted in ``stats``.
    """
    if stats is None:
        stats = RpslStats()
    lines = text.splitlines() if isinstance(text, str) else text
    out = []
    seen = set()
    for obj in _rpsl_objects(lines):
        stats.objects += 1
        cls = obj[0][0]
        if cls not in ("route", "route6"):
            continue
        attrs = {}
        for name, value in obj:
            attrs.setdefault(name, value)
        origin = attrs.get("origin", "")
        if not origin:
            stats.missing_origin += 1
            continue
        try:
            prefix = parse_prefix(obj[0][1].split()[0])
            asn = _asn(origin.split()[0])
        except (PrefixError, ValueError, IndexError):
            stats.bad_prefix += 1
            continue
        src = attrs.get("source", "").split()[0].upper() if attrs.get("source") else source_db
        rec = IrrRouteObject(prefix, asn, src, snapshot_date)
        if rec in seen:
            stats.duplicates += 1
            continue
        seen.add(rec)
        stats.routes += 1
        out.append(rec)
    return out


class OriginAttribution(enum.Enum):
    BGP_ONLY = "BGPOnly"
    IRR_ONLY = "IRROnly"
    RPKI_ONLY = "RPKIOnly"
    MULTIPLE = "Multiple"


def attribute_origins(bgp_origins: Iterable[int], irr_origins: Iterable[int],
                      rpki_origins: Iterable[int]) -> dict:
    """Map each origin ASN to the single dataset holding it, or Multiple.

    The RPKI set is expected to come from explicit HSP ROAs only.
    """
    sets = ((OriginAttribution.BGP_ONLY, set(bgp_origins)),
            (OriginAttribution.IRR_ONLY, set(irr_origins)),
            (OriginAttribution.RPKI_ONLY, set(rpki_origins)))
    out = {}
    for asn in set().union(*(s for _, s in sets)):
        present = [cls for cls, s in sets if asn in s]
        out[asn] = present[0] if len(present) == 1 else OriginAttribution.MULTIPLE
    return out


def attribution_counts(mapping: Mapping) -> Counter:
    return Counter(mapping.values())


class AnchorSource(enum.Enum):
    COLLECTORS = "Collectors"
    IRR = "IRR"
    RPKI = "RPKI"
    AGGREGATED = "Aggregated"
    MULTIPLE = "Multiple"


def anchor_dataset_attribution(collectors: Iterable[Prefix] = (), irr: Iterable[Prefix] = (),
                               rpki: Iterable[Prefix] = (), aggregated: Iterable[Prefix] = ()
                               ) -> dict:
    """Map each anchor to the single dataset it appears in, or Multiple.

    ``aggregated`` should hold only anchors aggregated on-path; ``rpki``
    only anchors of explicit HSP ROAs.
    """
    sets = ((AnchorSource.COLLECTORS, set(collectors)), (AnchorSource.IRR, set(irr)),
            (AnchorSource.RPKI, set(rpki)), (AnchorSource.AGGREGATED, set(aggregated)))
    out = {}
    for anchor in set().union(*(s for _, s in sets)):
        present = [cls for cls, s in sets if anchor in s]
        out[anchor] = present[0] if len(present) == 1 else AnchorSource.MULTIPLE
    return out


def hsp_anchors(prefixes: Iterable[Prefix]) -> set:
    return {anchor_of(p) for p in prefixes if is_hyper_specific(p)}


def explicit_roa_origins(roas: Iterable[RoaRecord], include_implicit: bool = False) -> set:
    wanted = {RoaHspKind.EXPLICIT}
    if include_implicit:
        wanted.add(RoaHspKind.IMPLICIT)
    return {r.asn for r in roas if r.asn != 0 and roa_hsp_kind(r) in wanted}


def explicit_roa_anchors(roas: Iterable[RoaRecord]) -> set:
    return {anchor_of(r.prefix) for r in roas if roa_hsp_kind(r) is RoaHspKind.EXPLICIT}
