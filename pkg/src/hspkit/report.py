"""On-disk record store and the analyses run over it.

A store is a directory::

    manifest.json
    <snapshot>/records-v4.csv
    <snapshot>/records-v6.csv

Record files keep every sanitized record (HSP or not, tagged) in decode
order. Analyses are plain functions over record iterables returning
:class:`Report` objects whose rows are sorted by a stable key.
"""

from __future__ import annotations

import csv
import hashlib
import json
import math
import os
from collections import Counter, defaultdict
from dataclasses import dataclass, field
from typing import Iterable, Iterator, Mapping, Optional, Sequence

from . import __version__
from .classify import (CIDR_GROUPS, AggregationPosition, CommunityConfig, aggregation_position,
                       anchor_position, cidr_bucket, classify_communities, community_share_stats)
from .mrt import PathSegment, RecordKind, RouteRecord, SegmentKind
from .prefix import ANCHOR_LENGTH, anchor_of, is_hyper_specific, parse_prefix
from .registry import (AnchorSource, OriginAttribution, RoaHspKind, RoaIndex, RovStatus,
                       anchor_dataset_attribution, attribute_origins, roa_hsp_kind, rov_validate)
from .timeline import ObservationWindow, heatmap_bins, prefix_stats, replay

__all__ = [
    "Report",
    "Store",
    "SCHEMA_VERSION",
    "record_to_row",
    "row_to_record",
    "growth",
    "share",
    "visibility_histogram",
    "timeline_analysis",
    "classify_report",
    "communities_report",
    "aggregation_report",
    "rov_report",
    "attribution_report",
    "rank",
    "origin_categories",
    "DEFAULT_BANDS",
]

SCHEMA_VERSION = 1

RECORD_FIELDS = ["timestamp", "collector", "kind", "peer_asn", "peer_address", "prefix",
                 "as_path", "origin_asn", "communities", "large_communities",
                 "extended_communities", "aggregator", "atomic_aggregate", "raw_length", "hsp"]


@dataclass
class Report:
    kind: str
    columns: list
    rows: list
    metadata: dict = field(default_factory=dict)

    def to_json(self) -> str:
        doc = {
            "schema_version": SCHEMA_VERSION,
            "kind": self.kind,
            "metadata": dict(sorted(self.metadata.items())),
            "columns": self.columns,
            "rows": [dict(zip(self.columns, r)) for r in self.rows],
        }
        return json.dumps(doc, indent=2, sort_keys=True) + "\n"

    def to_csv(self) -> str:
        lines = [",".join(self.columns)]
        for r in self.rows:
            lines.append(",".join(_csv_cell(v) for v in r))
        return "\n".join(lines) + "\n"

    def write(self, out_dir: str, fmt: str = "csv", name: Optional[str] = None) -> str:
        os.makedirs(out_dir, exist_ok=True)
        path = os.path.join(out_dir, f"{name or self.kind}.{fmt}")
        text = self.to_json() if fmt == "json" else self.to_csv()
        with open(path, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
        return path


def _csv_cell(v) -> str:
    if v is None:
        return ""
    if isinstance(v, float):
        return _fmt_float(v)
    s = str(v)
    if any(c in s for c in ',"\n'):
        return '"' + s.replace('"', '""') + '"'
    return s


def _fmt_float(v: float) -> str:
    if math.isnan(v):
        return "nan"
    return f"{v:.6f}"


def _round(v):
    return None if v is None else round(float(v), 6)


# -- record (de)serialization ----------------------------------------------

def _path_text(path) -> str:
    parts = []
    for seg in path:
        if seg.kind is SegmentKind.SET:
            parts.append("{" + ",".join(str(a) for a in seg.asns) + "}")
        else:
            parts.extend(str(a) for a in seg.asns)
    return " ".join(parts)


def _parse_path(text: str) -> tuple:
    segs = []
    run = []
    for tok in text.split():
        if tok.startswith("{"):
            if run:
                segs.append(PathSegment(SegmentKind.SEQUENCE, tuple(run)))
                run = []
            segs.append(PathSegment(SegmentKind.SET, tuple(int(a) for a in tok[1:-1].split(","))))
        else:
            run.append(int(tok))
    if run:
        segs.append(PathSegment(SegmentKind.SEQUENCE, tuple(run)))
    return tuple(segs)


def record_to_row(rec: RouteRecord) -> list:
    agg = f"{rec.aggregator[0]}@{rec.aggregator[1]}" if rec.aggregator else ""
    origin = rec.origin_asn
    return [
        f"{rec.timestamp:.6f}", rec.collector_id, rec.kind.value, rec.peer_asn, rec.peer_address,
        str(rec.prefix), _path_text(rec.as_path), "" if origin is None else origin,
        " ".join(f"{a}:{b}" for a, b in rec.communities),
        " ".join(f"{a}:{b}:{c}" for a, b, c in rec.large_communities),
        " ".join(str(v) for v in rec.extended_communities),
        agg, int(rec.atomic_aggregate),
        "" if rec.raw_length is None else rec.raw_length,
        int(is_hyper_specific(rec.prefix)),
    ]


def row_to_record(row: Mapping) -> RouteRecord:
    agg = None
    if row["aggregator"]:
        asn, _, ip = row["aggregator"].partition("@")
        agg = (int(asn), ip)
    return RouteRecord(
        float(row["timestamp"]), row["collector"], int(row["peer_asn"]), row["peer_address"],
        parse_prefix(row["prefix"]), RecordKind(row["kind"]), _parse_path(row["as_path"]),
        tuple(tuple(int(x) for x in c.split(":")) for c in row["communities"].split()),
        agg, row["atomic_aggregate"] == "1",
        tuple(tuple(int(x) for x in c.split(":")) for c in row["large_communities"].split()),
        tuple(int(v) for v in row["extended_communities"].split()),
        int(row["raw_length"]) if row["raw_length"] else None,
    )


# -- store -------------------------------------------------------------------

class Store:
    """Columnar CSV record store partitioned by snapshot and family."""

    def __init__(self, path: str):
        self.path = path
        self.manifest_path = os.path.join(path, "manifest.json")
        if os.path.exists(self.manifest_path):
            with open(self.manifest_path, encoding="utf-8") as fh:
                self.manifest = json.load(fh)
        else:
            self.manifest = {"schema_version": SCHEMA_VERSION, "snapshots": {}}

    def snapshots(self) -> list[str]:
        return sorted(self.manifest["snapshots"])

    def info(self, snapshot: str) -> dict:
        return self.manifest["snapshots"][snapshot]

    def window(self, snapshot: str) -> ObservationWindow:
        lo, hi = self.info(snapshot)["window"]
        return ObservationWindow(lo, hi)

    def _file(self, snapshot: str, family: int) -> str:
        return os.path.join(self.path, snapshot, f"records-v{family}.csv")

    def records(self, snapshot: str, family: int) -> Iterator[RouteRecord]:
        path = self._file(snapshot, family)
        if not os.path.exists(path):
            return
        with open(path, newline="", encoding="utf-8") as fh:
            for row in csv.DictReader(fh):
                yield row_to_record(row)

    def writer(self, snapshot: str) -> "_SnapshotWriter":
        return _SnapshotWriter(self, snapshot)

    def save_manifest(self) -> None:
        os.makedirs(self.path, exist_ok=True)
        with open(self.manifest_path, "w", encoding="utf-8") as fh:
            json.dump(self.manifest, fh, indent=2, sort_keys=True)
            fh.write("\n")


class _SnapshotWriter:
    def __init__(self, store: Store, snapshot: str):
        self.store = store
        self.snapshot = snapshot
        os.makedirs(os.path.join(store.path, snapshot), exist_ok=True)
        self._fh = {}
        self._w = {}
        for family in (4, 6):
            fh = open(store._file(snapshot, family), "w", newline="", encoding="utf-8")
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(RECORD_FIELDS)
            self._fh[family], self._w[family] = fh, w
        self.count = Counter()

    def add(self, rec: RouteRecord) -> None:
        self._w[rec.prefix.family].writerow(record_to_row(rec))
        self.count[rec.prefix.family] += 1

    def close(self) -> None:
        for fh in self._fh.values():
            fh.close()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()


# -- analyses ----------------------------------------------------------------

def _routed(rec: RouteRecord) -> bool:
    return rec.kind is not RecordKind.WITHDRAWAL


def _hsp_routes(records: Iterable[RouteRecord]) -> Iterator[RouteRecord]:
    for rec in records:
        if _routed(rec) and is_hyper_specific(rec.prefix):
            yield rec


def growth(snapshots: Mapping[str, Mapping[int, Iterable[RouteRecord]]],
           consistent_feeders_only: bool = False) -> Report:
    """Distinct HSPs and distinct HSP origin ASes per snapshot and family.

    In consistent mode only feeder ASes present in every snapshot (per
    family) contribute.
    """
    feeders = defaultdict(dict)  # family -> snapshot -> set of peer ASNs
    seen = defaultdict(dict)     # family -> snapshot -> {hsp: {(peer, origin)}}
    for snap, fams in snapshots.items():
        for family, records in fams.items():
            fs = feeders[family].setdefault(snap, set())
            hs = seen[family].setdefault(snap, defaultdict(set))
            for rec in records:
                fs.add(rec.peer_asn)
                if _routed(rec) and is_hyper_specific(rec.prefix):
                    hs[rec.prefix].add((rec.peer_asn, rec.origin_asn))
    rows = []
    for family in sorted(seen):
        allowed = None
        if consistent_feeders_only:
            allowed = set.intersection(*feeders[family].values()) if feeders[family] else set()
        for snap in sorted(seen[family]):
            hsps, origins = set(), set()
            for p, pairs in seen[family][snap].items():
                for peer, origin in pairs:
                    if allowed is not None and peer not in allowed:
                        continue
                    hsps.add(p)
                    if origin is not None:
                        origins.add(origin)
            n_feeders = len(feeders[family][snap] if allowed is None
                            else feeders[family][snap] & allowed)
            rows.append([snap, family, len(hsps), len(origins), n_feeders])
    return Report("growth", ["snapshot", "family", "hsp_count", "origin_count", "feeder_count"], rows,
                  {"consistent_feeders_only": consistent_feeders_only})


def _length_group(p) -> str:
    if not is_hyper_specific(p):
        return f"<=/{ANCHOR_LENGTH[p.family]}"
    for family, lo, hi, _ in CIDR_GROUPS:
        if p.family == family and lo <= p.length <= hi:
            return f"/{lo}-/{hi}"
    raise AssertionError(p)


def share(snapshots: Mapping[str, Mapping[int, Iterable[RouteRecord]]]) -> Report:
    """Distinct visible prefixes per CIDR group and the overall HSP share."""
    rows = []
    for snap in sorted(snapshots):
        for family in sorted(snapshots[snap]):
            prefixes = {rec.prefix for rec in snapshots[snap][family] if _routed(rec)}
            total = len(prefixes)
            groups = Counter(_length_group(p) for p in prefixes)
            names = [f"<=/{ANCHOR_LENGTH[family]}"] + [f"/{lo}-/{hi}" for f, lo, hi, _ in CIDR_GROUPS
                                                       if f == family]
            for name in names:
                rows.append([snap, family, name, groups[name], _round(groups[name] / total) if total else None])
            hsp = total - groups[names[0]]
            rows.append([snap, family, "hsp", hsp, _round(hsp / total) if total else None])
    return Report("share", ["snapshot", "family", "group", "prefix_count", "share"], rows)


DEFAULT_BANDS = (1, 2, 6, 11, 101)


def _band_labels(edges: Sequence[int]) -> list[str]:
    """Labels for bands given by lower edges; the open top band is written
    ``N+`` meaning more than ``N`` (edges 1,2,6,11,101 give ...,"11-100","100+")."""
    labels = []
    for i, lo in enumerate(edges):
        if i + 1 < len(edges):
            hi = edges[i + 1] - 1
            labels.append(str(lo) if hi == lo else f"{lo}-{hi}")
        else:
            labels.append(f"{lo - 1}+" if lo > 1 else f"{lo}+")
    return labels


def band_of(v: int, edges: Sequence[int] = DEFAULT_BANDS) -> str:
    labels = _band_labels(edges)
    idx = 0
    for i, lo in enumerate(edges):
        if v >= lo:
            idx = i
    return labels[idx]


def _split_ribs(records: Iterable[RouteRecord]):
    """Seed RIB = entries of each collector's first dump; the rest are updates."""
    records = list(records)
    first = {}
    for rec in records:
        if rec.kind is RecordKind.RIB_ENTRY:
            t = first.get(rec.collector_id)
            if t is None or rec.timestamp < t:
                first[rec.collector_id] = rec.timestamp
    seeds, updates = [], []
    for rec in records:
        if rec.kind is RecordKind.RIB_ENTRY and rec.timestamp == first[rec.collector_id]:
            seeds.append(rec)
        else:
            updates.append(rec)
    return seeds, updates


def hsp_intervals(records: Iterable[RouteRecord], window: ObservationWindow):
    hsp = [r for r in records if is_hyper_specific(r.prefix)]
    seeds, updates = _split_ribs(hsp)
    return replay(seeds, updates, window)


def visibility_histogram(snapshots: Mapping[str, Mapping[int, Iterable[RouteRecord]]],
                         windows: Mapping[str, ObservationWindow],
                         edges: Sequence[int] = DEFAULT_BANDS) -> Report:
    """HSPs per snapshot bucketed by how many feeder ASes had them installed."""
    labels = _band_labels(edges)
    rows = []
    for snap in sorted(snapshots):
        for family in sorted(snapshots[snap]):
            stats = prefix_stats(hsp_intervals(snapshots[snap][family], windows[snap]), windows[snap])
            counts = Counter(band_of(s.visibility, edges) for s in stats.values())
            for label in labels:
                rows.append([snap, family, label, counts[label]])
    return Report("visibility", ["snapshot", "family", "band", "hsp_count"], rows,
                  {"bands": list(edges)})


def timeline_analysis(records: Iterable[RouteRecord], window: ObservationWindow,
                      feeder_group: int = 10, time_cell_days: float = 14):
    """Intervals, per-prefix statistics and the visibility/consistency heatmap."""
    intervals = hsp_intervals(records, window)
    stats = prefix_stats(intervals, window)
    hm = heatmap_bins(stats.values(), window, feeder_group=feeder_group,
                      time_cell_days=time_cell_days)
    rows = [[str(p), s.visibility, _round(s.present_seconds), _round(s.consistency)]
            for p, s in sorted(stats.items())]
    table = Report("prefix_stats", ["prefix", "visibility", "present_seconds", "consistency"], rows)
    return intervals, table, hm


def heatmap_report(snapshot: str, family: int, hm) -> Report:
    rows = []
    n_groups, n_cells = hm.counts.shape
    for g in range(n_groups):
        for c in range(n_cells):
            rows.append([snapshot, family, g + 1, c + 1, int(hm.counts[g, c])])
    return Report("heatmap", ["snapshot", "family", "visibility_group", "time_cell", "hsp_count"], rows,
                  {"feeder_group": hm.feeder_group, "time_cell_days": hm.time_cell_days})


def classify_report(snapshots: Mapping[str, Mapping[int, Iterable[RouteRecord]]]) -> Report:
    """HSPs per CIDR use-case bucket."""
    rows = []
    for snap in sorted(snapshots):
        for family in sorted(snapshots[snap]):
            hsps = {rec.prefix for rec in _hsp_routes(snapshots[snap][family])}
            counts = Counter(cidr_bucket(p) for p in hsps)
            for fam, lo, hi, hint in CIDR_GROUPS:
                if fam == family:
                    rows.append([snap, family, hint.value, f"/{lo}-/{hi}", counts[hint]])
    return Report("classify", ["snapshot", "family", "use_case", "lengths", "hsp_count"], rows)


def hsp_labels(records: Iterable[RouteRecord], cfg: CommunityConfig = CommunityConfig()) -> dict:
    """Union of community labels over all routes of each HSP."""
    labels = defaultdict(set)
    for rec in _hsp_routes(records):
        labels[rec.prefix].update(classify_communities(rec.communities, cfg))
    return {p: frozenset(v) for p, v in labels.items()}


def communities_report(snapshots: Mapping[str, Mapping[int, Iterable[RouteRecord]]],
                       cfg: CommunityConfig = CommunityConfig()) -> Report:
    per_family = defaultdict(list)
    for snap in sorted(snapshots):
        for family, records in snapshots[snap].items():
            per_family[family].append(list(hsp_labels(records, cfg).values()))
    rows = []
    for family in sorted(per_family):
        stats, skipped = community_share_stats(per_family[family])
        for name in sorted(stats):
            s = stats[name]
            rows.append([family, name, _round(s.median), _round(s.std), len(s.shares), skipped])
    return Report("communities", ["family", "label", "median_share", "std", "snapshots", "skipped"],
                  rows, {"x666": cfg.x666})


def anchor_positions(records: Iterable[RouteRecord], warnings: Optional[Counter] = None) -> dict:
    """Anchor-level aggregation position for /24 (/48) routes carrying an AGGREGATOR."""
    per_anchor = defaultdict(list)
    for rec in records:
        if not _routed(rec) or rec.prefix.length != ANCHOR_LENGTH[rec.prefix.family]:
            continue
        per_anchor[rec.prefix].append(aggregation_position(rec, warnings))
    out = {}
    for anchor, positions in per_anchor.items():
        pos = anchor_position(positions)
        if pos is not None:
            out[anchor] = pos
    return out


def aggregation_report(snapshots: Mapping[str, Mapping[int, Iterable[RouteRecord]]]) -> Report:
    classes = [AggregationPosition.ORIGIN, AggregationPosition.ON_PATH,
               AggregationPosition.OFF_PATH, AggregationPosition.MULTIPLE]
    rows = []
    warnings = Counter()
    for snap in sorted(snapshots):
        for family in sorted(snapshots[snap]):
            counts = Counter(anchor_positions(snapshots[snap][family], warnings).values())
            for cls in classes:
                rows.append([snap, family, cls.value, counts[cls]])
    return Report("aggregation", ["snapshot", "family", "position", "anchor_count"], rows,
                  {"as_trans_aggregators": warnings["as_trans_aggregator"]})


def rov_report(snapshots: Mapping[str, Mapping[int, Iterable[RouteRecord]]], roas) -> Report:
    """ROV status of each distinct (HSP, origin) pair."""
    index = roas if isinstance(roas, RoaIndex) else RoaIndex(roas)
    rows = []
    for snap in sorted(snapshots):
        for family in sorted(snapshots[snap]):
            pairs = {(rec.prefix, rec.origin_asn) for rec in _hsp_routes(snapshots[snap][family])
                     if rec.origin_asn is not None}
            counts = Counter(rov_validate(p, o, index) for p, o in pairs)
            total = len(pairs)
            for status in RovStatus:
                rows.append([snap, family, status.value, counts[status],
                             _round(counts[status] / total) if total else None])
    return Report("rov", ["snapshot", "family", "status", "pair_count", "share"], rows)


def attribution_report(snapshots: Mapping[str, Mapping[int, Iterable[RouteRecord]]],
                       irr_objects=(), roas=(), include_implicit: bool = False):
    """Origin-AS and anchor attribution across collectors, IRR and RPKI."""
    irr_objects = list(irr_objects)
    roas = list(roas)
    wanted = {RoaHspKind.EXPLICIT} | ({RoaHspKind.IMPLICIT} if include_implicit else set())
    origin_rows, anchor_rows = [], []
    for snap in sorted(snapshots):
        for family in sorted(snapshots[snap]):
            records = list(snapshots[snap][family])
            hsp_recs = list(_hsp_routes(records))
            bgp = {r.origin_asn for r in hsp_recs if r.origin_asn is not None}
            irr_hsp = [o for o in irr_objects if o.prefix.family == family and is_hyper_specific(o.prefix)]
            rpki_hsp = [r for r in roas if r.prefix.family == family and roa_hsp_kind(r) in wanted
                        and r.asn != 0]
            origins = attribute_origins(bgp, {o.origin_asn for o in irr_hsp}, {r.asn for r in rpki_hsp})
            counts = Counter(origins.values())
            for cls in OriginAttribution:
                origin_rows.append([snap, family, cls.value, counts[cls]])

            on_path = {a for a, pos in anchor_positions(records).items()
                       if pos is AggregationPosition.ON_PATH}
            explicit = [r for r in rpki_hsp if roa_hsp_kind(r) is RoaHspKind.EXPLICIT]
            anchors = anchor_dataset_attribution(
                collectors={anchor_of(r.prefix) for r in hsp_recs},
                irr={anchor_of(o.prefix) for o in irr_hsp},
                rpki={anchor_of(r.prefix) for r in explicit},
                aggregated=on_path)
            acounts = Counter(anchors.values())
            for cls in AnchorSource:
                anchor_rows.append([snap, family, cls.value, acounts[cls]])
    return (Report("origin_attribution", ["snapshot", "family", "class", "origin_count"], origin_rows,
                   {"include_implicit": include_implicit}),
            Report("anchor_attribution", ["snapshot", "family", "class", "anchor_count"], anchor_rows))


def rank(snapshots: Mapping[str, Mapping[int, Iterable[RouteRecord]]], key: str = "origin_asn",
         n: int = 10) -> Report:
    """Top contributors by distinct HSPs; ties go to the lower ASN."""
    if key not in ("origin_asn", "feeder_asn"):
        raise ValueError(f"unknown ranking key {key!r}")
    rows = []
    for snap in sorted(snapshots):
        for family in sorted(snapshots[snap]):
            per = defaultdict(set)
            for rec in _hsp_routes(snapshots[snap][family]):
                asn = rec.origin_asn if key == "origin_asn" else rec.peer_asn
                if asn is not None:
                    per[asn].add(rec.prefix)
            ordered = sorted(per.items(), key=lambda kv: (-len(kv[1]), kv[0]))[:n]
            for i, (asn, ps) in enumerate(ordered, 1):
                rows.append([snap, family, i, asn, len(ps)])
    return Report("rank", ["snapshot", "family", "rank", key, "hsp_count"], rows, {"key": key, "n": n})


CATEGORIES = ("Content", "Education", "Hypergiant", "ISP (Stub)", "ISP (Transit)", "Tier 1", "Others")


def load_category_map(path: str) -> dict:
    """``asn,category`` CSV; unknown categories are kept as given."""
    out = {}
    with open(path, newline="", encoding="utf-8") as fh:
        for row in csv.reader(fh):
            if not row or row[0].startswith("#") or row[0].strip().lower() == "asn":
                continue
            asn = row[0].strip().upper().removeprefix("AS")
            out[int(asn)] = row[1].strip()
    return out


def origin_categories(snapshots: Mapping[str, Mapping[int, Iterable[RouteRecord]]],
                      category_map: Mapping[int, str]) -> Report:
    """Category distribution of all origin ASes versus HSP origin ASes."""
    rows = []
    for snap in sorted(snapshots):
        all_origins, hsp_origins = set(), set()
        for family in sorted(snapshots[snap]):
            for rec in snapshots[snap][family]:
                if not _routed(rec) or rec.origin_asn is None:
                    continue
                all_origins.add(rec.origin_asn)
                if is_hyper_specific(rec.prefix):
                    hsp_origins.add(rec.origin_asn)
        a = Counter(category_map.get(x, "Others") for x in all_origins)
        h = Counter(category_map.get(x, "Others") for x in hsp_origins)
        names = list(CATEGORIES) + sorted(set(a) - set(CATEGORIES))
        for name in names:
            rows.append([snap, name, a[name], h[name]])
    return Report("categories", ["snapshot", "category", "all_origins", "hsp_origins"], rows)


def config_hash(*parts) -> str:
    h = hashlib.sha256()
    for part in parts:
        if isinstance(part, str):
            part = part.encode()
        h.update(part or b"")
        h.update(b"\0")
    return h.hexdigest()[:16]


def default_metadata(cfg_hash: str) -> dict:
    return {"tool": "hspkit", "tool_version": __version__, "config_hash": cfg_hash}
