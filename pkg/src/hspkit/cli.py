"""Command-line front end.

Every verb reads a record store built by ``scan`` and writes one report
file per analysis into ``--out-dir``. Exit codes: 0 success, 1 input
error, 2 config error, 3 finished with warnings.
"""

from __future__ import annotations

import argparse
import bz2
import gzip
import io
import json
import logging
import lzma
import math
import os
import shlex
import subprocess
import sys
from datetime import date, datetime, timezone

from . import __version__
from . import report as rp
from .classify import CommunityConfig, load_community_config
from .mrt import DecodeStats, MrtDecodeError, MrtReader
from .registry import load_roa_csv, parse_rpsl
from .sanitize import ConfigError, Sanitizer, default_rules, load_noise_rules
from .timeline import DAY, ObservationWindow, window_consistency, write_intervals_csv

log = logging.getLogger("hspkit")

EXIT_OK, EXIT_INPUT, EXIT_CONFIG, EXIT_PARTIAL = 0, 1, 2, 3


class InputError(Exception):
    pass


# -- input handling -----------------------------------------------------------

_MAGIC = ((b"\x1f\x8b", gzip.open), (b"BZh", bz2.open), (b"\xfd7zXZ\x00", lzma.open))


def open_input(path: str, decompressor: str | None = None):
    """Binary stream for an MRT file, decompressing by magic bytes or via an
    external command such as ``"zstd -dc"``."""
    if not os.path.isfile(path) or not os.access(path, os.R_OK):
        raise InputError(f"cannot read {path}")
    if decompressor:
        proc = subprocess.run(shlex.split(decompressor) + [path], capture_output=True)
        if proc.returncode != 0:
            raise InputError(f"{decompressor} failed on {path}: {proc.stderr.decode(errors='replace')}")
        return io.BytesIO(proc.stdout)
    with open(path, "rb") as fh:
        head = fh.read(6)
    for magic, opener in _MAGIC:
        if head.startswith(magic):
            return opener(path, "rb")
    return open(path, "rb")


def _split_input(arg: str):
    """``COLLECTOR=PATH`` or plain ``PATH``."""
    name, sep, path = arg.partition("=")
    if sep and name and not os.path.exists(arg):
        return name, path
    return "", arg


def load_rules(config: str | None):
    if config is None:
        return default_rules()
    if not os.path.isfile(config):
        raise InputError(f"cannot read config {config}")
    return load_noise_rules(config)


def _config_bytes(config: str | None) -> bytes:
    if config is None:
        from importlib.resources import files
        return files("hspkit").joinpath("data/default_rules.csv").read_bytes()
    with open(config, "rb") as fh:
        return fh.read()


# -- verbs --------------------------------------------------------------------

def cmd_scan(args) -> int:
    rules = load_rules(args.config)
    cfg_hash = rp.config_hash(_config_bytes(args.config))
    inputs = [_split_input(a) for a in args.inputs]
    for _, path in inputs:
        if not os.path.isfile(path) or not os.access(path, os.R_OK):
            raise InputError(f"cannot read {path}")

    store = rp.Store(args.store)
    store.manifest.setdefault("config_hash", cfg_hash)
    if store.manifest["config_hash"] != cfg_hash:
        log.warning("store was built with a different filter config; overwriting its hash")
        store.manifest["config_hash"] = cfg_hash
    if not inputs:
        store.save_manifest()
        return EXIT_OK

    window = None
    if args.window_start:
        window = ObservationWindow.from_dates(date.fromisoformat(args.window_start), args.window_days)
    sanitizer = Sanitizer(rules)
    outside = 0
    lo = hi = None
    file_info = []
    warnings = 0
    snapshot = args.snapshot or (args.window_start or "")
    tmp_name = snapshot or "_pending"
    with store.writer(tmp_name) as writer:
        for collector, path in inputs:
            reader = None
            extra = []
            try:
                with open_input(path, args.decompressor) as fh:
                    reader = MrtReader(fh, collector=collector, strict=args.strict)
                    for rec in reader:
                        if window is not None and not (window.start <= rec.timestamp < window.end):
                            outside += 1
                            continue
                        if sanitizer.check(rec).kept:
                            writer.add(rec)
                        lo = rec.timestamp if lo is None else min(lo, rec.timestamp)
                        hi = rec.timestamp if hi is None else max(hi, rec.timestamp)
            except MrtDecodeError:
                pass  # already recorded in the reader's stats
            except (OSError, EOFError, lzma.LZMAError) as exc:
                extra.append((0, f"{type(exc).__name__}: {exc}"))
            reader_stats = reader.stats if reader is not None else DecodeStats()
            reader_stats.errors.extend(extra)
            n_err = max(reader_stats.error_count, len(reader_stats.errors))
            if n_err:
                warnings += n_err
                log.warning("%s: %d decode problem(s); first: %s", os.path.basename(path), n_err,
                            reader_stats.errors[0][1])
            file_info.append({"file": os.path.basename(path), "collector": collector,
                              "records": reader_stats.records, "errors": n_err,
                              "messages": [m for _, m in reader_stats.errors[:10]]})

    if window is None and lo is not None:
        window = ObservationWindow(math.floor(lo), math.floor(hi) + 1)
    if not snapshot:
        snapshot = _utc_date(window.start) if window else "empty"
    if tmp_name != snapshot:
        dest = os.path.join(store.path, snapshot)
        if os.path.exists(dest):
            for name in os.listdir(dest):
                os.remove(os.path.join(dest, name))
            os.rmdir(dest)
        os.rename(os.path.join(store.path, tmp_name), dest)

    decoded = sanitizer.total + outside
    store.manifest["snapshots"][snapshot] = {
        "window": [window.start, window.end] if window else None,
        "inputs": file_info,
        "decoded": decoded,
        "kept": sanitizer.kept,
        "outside_window": outside,
        "dropped": dict(sorted(sanitizer.dropped.items())),
        "dropped_by_kind": dict(sorted((k.value, v) for k, v in sanitizer.dropped_kind.items())),
        "records": {f"v{f}": writer.count[f] for f in (4, 6)},
        "warnings": warnings,
    }
    store.save_manifest()

    rows = [[snapshot, "total", "", decoded], [snapshot, "kept", "", sanitizer.kept]]
    if outside:
        rows.append([snapshot, "dropped", "outside-window", outside])
    for rule_id, n in sorted(sanitizer.dropped.items()):
        rows.append([snapshot, "dropped", rule_id, n])
    _emit(args, rp.Report("scan", ["snapshot", "outcome", "rule", "count"], rows), cfg_hash)
    return EXIT_PARTIAL if warnings else EXIT_OK


def _utc_date(ts: float) -> str:
    return datetime.fromtimestamp(ts, timezone.utc).date().isoformat()


class _Records:
    """Re-iterable view of one snapshot/family partition."""

    def __init__(self, store, snapshot, family):
        self.store, self.snapshot, self.family = store, snapshot, family

    def __iter__(self):
        return self.store.records(self.snapshot, self.family)


def _families(args):
    return (4, 6) if args.family == "both" else (int(args.family),)


def _open_store(args) -> rp.Store:
    if not os.path.exists(os.path.join(args.store, "manifest.json")):
        raise InputError(f"no record store at {args.store} (run 'hspkit scan' first)")
    return rp.Store(args.store)


def _snapshots(args, store):
    snaps = [s for s in store.snapshots() if store.info(s)["window"] is not None]
    return {s: {f: _Records(store, s, f) for f in _families(args)} for s in snaps}


def _windows(store, snaps):
    return {s: store.window(s) for s in snaps}


def _options_hash(args, store) -> str:
    # auxiliary files enter through their contents, not their paths
    skip = {"func", "out_dir", "store", "format", "verbose", "roas", "irr", "category_map",
            "community_config", "config"}
    opts = {k: v for k, v in sorted(vars(args).items()) if k not in skip}
    aux = []
    for key in ("roas", "irr", "category_map", "community_config"):
        paths = getattr(args, key, None)
        for p in ([paths] if isinstance(paths, str) else paths or []):
            with open(p, "rb") as fh:
                aux.append(fh.read())
    return rp.config_hash(store.manifest.get("config_hash", ""), json.dumps(opts, default=str), *aux)


def _emit(args, report: rp.Report, cfg_hash: str, fmt: str | None = None, out_dir: str | None = None):
    report.metadata.update(rp.default_metadata(cfg_hash))
    path = report.write(out_dir or args.out_dir, fmt or args.format)
    log.info("wrote %s", path)
    return path


def cmd_growth(args) -> int:
    store = _open_store(args)
    rep = rp.growth(_snapshots(args, store), args.consistent)
    _emit(args, rep, _options_hash(args, store))
    return EXIT_OK


def cmd_share(args) -> int:
    store = _open_store(args)
    _emit(args, rp.share(_snapshots(args, store)), _options_hash(args, store))
    return EXIT_OK


def _parse_bands(text: str):
    try:
        edges = tuple(int(x) for x in text.split(","))
    except ValueError:
        raise ConfigError(f"bad band list {text!r}") from None
    if not edges or edges[0] != 1 or any(b <= a for a, b in zip(edges, edges[1:])):
        raise ConfigError("bands must be increasing lower edges starting at 1")
    return edges


def cmd_visibility(args) -> int:
    store = _open_store(args)
    snaps = _snapshots(args, store)
    rep = rp.visibility_histogram(snaps, _windows(store, snaps), _parse_bands(args.bands))
    _emit(args, rep, _options_hash(args, store))
    return EXIT_OK


def cmd_timeline(args) -> int:
    store = _open_store(args)
    cfg = _options_hash(args, store)
    snaps = _snapshots(args, store)
    heat_rows, stat_rows, wc_rows = [], [], []
    for snap in sorted(snaps):
        window = store.window(snap)
        for family in sorted(snaps[snap]):
            intervals, table, hm = rp.timeline_analysis(snaps[snap][family], window,
                                                        args.feeder_group, args.time_cell_days)
            os.makedirs(args.out_dir, exist_ok=True)
            with open(os.path.join(args.out_dir, f"intervals-{snap}-v{family}.csv"), "w",
                      newline="", encoding="utf-8") as fh:
                write_intervals_csv(intervals, fh)
            stat_rows.extend([snap, family] + r for r in table.rows)
            heat_rows.extend(rp.heatmap_report(snap, family, hm).rows)
            days = int(round(window.length / DAY))
            if days >= 3:
                daily = [set() for _ in range(days)]
                for iv in intervals:
                    first = int((iv.start - window.start) // DAY)
                    last = int(math.ceil((iv.end - window.start) / DAY)) - 1
                    for d in range(max(first, 0), min(last, days - 1) + 1):
                        daily[d].add(iv.prefix)
                for w in range(1, min(14, days - 2) + 1):
                    wc = window_consistency(daily, w)
                    wc_rows.append([snap, family, w, rp._round(wc.mean), rp._round(wc.q25),
                                    rp._round(wc.q75), wc.skipped])
    _emit(args, rp.Report("prefix_stats", ["snapshot", "family", "prefix", "visibility",
                                           "present_seconds", "consistency"], stat_rows), cfg)
    _emit(args, rp.Report("heatmap", ["snapshot", "family", "visibility_group", "time_cell",
                                      "hsp_count"], heat_rows,
                          {"feeder_group": args.feeder_group, "time_cell_days": args.time_cell_days}), cfg)
    _emit(args, rp.Report("window_consistency", ["snapshot", "family", "window", "mean", "q25",
                                                 "q75", "skipped"], wc_rows), cfg)
    return EXIT_OK


def cmd_classify(args) -> int:
    store = _open_store(args)
    _emit(args, rp.classify_report(_snapshots(args, store)), _options_hash(args, store))
    return EXIT_OK


def _community_cfg(args) -> CommunityConfig:
    if args.community_config:
        return load_community_config(args.community_config, x666=not args.no_x666)
    return CommunityConfig(x666=not args.no_x666)


def cmd_communities(args) -> int:
    store = _open_store(args)
    rep = rp.communities_report(_snapshots(args, store), _community_cfg(args))
    _emit(args, rep, _options_hash(args, store))
    return EXIT_OK


def cmd_aggregation(args) -> int:
    store = _open_store(args)
    rep = rp.aggregation_report(_snapshots(args, store))
    _emit(args, rep, _options_hash(args, store))
    return EXIT_PARTIAL if rep.metadata.get("as_trans_aggregators") else EXIT_OK


def _read_roas(path):
    if not os.path.isfile(path):
        raise InputError(f"cannot read {path}")
    try:
        return load_roa_csv(path)
    except ValueError as exc:
        raise InputError(str(exc)) from None


def cmd_rov(args) -> int:
    store = _open_store(args)
    rep = rp.rov_report(_snapshots(args, store), _read_roas(args.roas))
    _emit(args, rep, _options_hash(args, store))
    return EXIT_OK


def cmd_attribute(args) -> int:
    store = _open_store(args)
    irr = []
    for path in args.irr:
        if not os.path.isfile(path):
            raise InputError(f"cannot read {path}")
        with open_input(path) as fh:
            text = fh.read().decode("utf-8", errors="replace")
        irr.extend(parse_rpsl(text, source_db=os.path.basename(path)))
    roas = _read_roas(args.roas) if args.roas else []
    origins, anchors = rp.attribution_report(_snapshots(args, store), irr, roas, args.include_implicit)
    cfg = _options_hash(args, store)
    _emit(args, origins, cfg)
    _emit(args, anchors, cfg)
    return EXIT_OK


def cmd_rank(args) -> int:
    store = _open_store(args)
    key = "origin_asn" if args.key in ("origin", "origin_asn") else "feeder_asn"
    _emit(args, rp.rank(_snapshots(args, store), key, args.n), _options_hash(args, store))
    return EXIT_OK


def cmd_categories(args) -> int:
    store = _open_store(args)
    if not os.path.isfile(args.category_map):
        raise InputError(f"cannot read {args.category_map}")
    try:
        mapping = rp.load_category_map(args.category_map)
    except (ValueError, IndexError) as exc:
        raise ConfigError(f"category map: {exc}") from None
    _emit(args, rp.origin_categories(_snapshots(args, store), mapping), _options_hash(args, store))
    return EXIT_OK


def cmd_export(args) -> int:
    """Dashboard feeds: one JSON file per analysis under ``<out-dir>/feeds``."""
    store = _open_store(args)
    cfg = _options_hash(args, store)
    snaps = _snapshots(args, store)
    out = os.path.join(args.out_dir, "feeds")
    feeds = [rp.growth(snaps), rp.share(snaps)]
    heat_rows = []
    for snap in sorted(snaps):
        for family in sorted(snaps[snap]):
            _, _, hm = rp.timeline_analysis(snaps[snap][family], store.window(snap))
            heat_rows.extend(rp.heatmap_report(snap, family, hm).rows)
    feeds.append(rp.Report("heatmap", ["snapshot", "family", "visibility_group", "time_cell",
                                       "hsp_count"], heat_rows,
                           {"feeder_group": 10, "time_cell_days": 14}))
    feeds.append(rp.communities_report(snaps, _community_cfg(args)))
    if args.roas:
        feeds.append(rp.rov_report(snaps, _read_roas(args.roas)))
    r1 = rp.rank(snaps, "origin_asn", args.n)
    r2 = rp.rank(snaps, "feeder_asn", args.n)
    feeds.append(rp.Report("rank_origin", r1.columns, r1.rows, r1.metadata))
    feeds.append(rp.Report("rank_feeder", r2.columns, r2.rows, r2.metadata))
    for feed in feeds:
        _emit(args, feed, cfg, fmt="json", out_dir=out)
    return EXIT_OK


# -- parser -----------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    g = common.add_argument_group("global options")
    g.add_argument("--family", choices=["4", "6", "both"], default=argparse.SUPPRESS,
                   help="address family to analyse (default both)")
    g.add_argument("--window-days", type=int, default=argparse.SUPPRESS,
                   help="observation window length in days (default 7)")
    g.add_argument("--config", default=argparse.SUPPRESS,
                   help="filter rule CSV replacing the bundled defaults")
    g.add_argument("--out-dir", default=argparse.SUPPRESS, help="report directory (default .)")
    g.add_argument("--format", choices=["csv", "json"], default=argparse.SUPPRESS)
    g.add_argument("--store", default=argparse.SUPPRESS, help="record store directory (default hspstore)")
    g.add_argument("-v", "--verbose", action="count", default=argparse.SUPPRESS)

    parser = argparse.ArgumentParser(prog="hspkit", parents=[common],
                                     description="Hyper-specific prefix analysis of BGP collector data.")
    parser.add_argument("--version", action="version", version=f"hspkit {__version__}")
    sub = parser.add_subparsers(dest="verb", required=True, metavar="VERB")

    def verb(name, func, help_):
        p = sub.add_parser(name, parents=[common], help=help_, description=help_)
        p.set_defaults(func=func)
        return p

    p = verb("scan", cmd_scan, "decode and sanitize MRT files into the record store")
    p.add_argument("inputs", nargs="*", metavar="[COLLECTOR=]FILE")
    p.add_argument("--snapshot", help="snapshot id (default: window start date)")
    p.add_argument("--window-start", help="YYYY-MM-DD; records outside the window are dropped")
    p.add_argument("--decompressor", help="external command printing the decompressed file")
    p.add_argument("--strict", action="store_true", help="stop a file at its first malformed record")

    p = verb("growth", cmd_growth, "HSP and origin-AS counts per snapshot")
    p.add_argument("--consistent", action="store_true", help="only feeders present in every snapshot")

    verb("share", cmd_share, "share of visible prefixes per CIDR group")

    p = verb("visibility", cmd_visibility, "HSPs per feeder-count band")
    p.add_argument("--bands", default=",".join(map(str, rp.DEFAULT_BANDS)),
                   help="comma-separated band lower edges (default 1,2,6,11,101)")

    p = verb("timeline", cmd_timeline, "presence intervals, per-prefix stats, heatmap")
    p.add_argument("--feeder-group", type=int, default=10)
    p.add_argument("--time-cell-days", type=float, default=14)

    verb("classify", cmd_classify, "HSPs per CIDR use-case bucket")

    p = verb("communities", cmd_communities, "community label shares across snapshots")
    p.add_argument("--community-config", help="'asn:value Label' lines")
    p.add_argument("--no-x666", action="store_true", help="only 65535:666 means blackholing")

    verb("aggregation", cmd_aggregation, "aggregation position of HSP anchors")

    p = verb("rov", cmd_rov, "route origin validation of HSP/origin pairs")
    p.add_argument("--roas", required=True, help="validated ROA CSV")

    p = verb("attribute", cmd_attribute, "origin and anchor attribution across datasets")
    p.add_argument("--irr", nargs="*", default=[], help="RPSL dump files")
    p.add_argument("--roas", help="validated ROA CSV")
    p.add_argument("--include-implicit", action="store_true")

    p = verb("rank", cmd_rank, "top HSP contributors")
    p.add_argument("--key", choices=["origin", "feeder", "origin_asn", "feeder_asn"], default="origin")
    p.add_argument("-n", type=int, default=10)

    p = verb("categories", cmd_categories, "AS category distribution of origins")
    p.add_argument("--category-map", required=True, help="asn,category CSV")

    p = verb("export", cmd_export, "dashboard feed files")
    p.add_argument("--roas", help="validated ROA CSV for the ROV feed")
    p.add_argument("--community-config")
    p.add_argument("--no-x666", action="store_true")
    p.add_argument("-n", type=int, default=20)
    return parser


_DEFAULTS = {"family": "both", "window_days": 7, "config": None, "out_dir": ".",
             "format": "csv", "store": "hspstore", "verbose": 0}


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    for key, value in _DEFAULTS.items():
        if not hasattr(args, key):
            setattr(args, key, value)
    logging.basicConfig(level=logging.DEBUG if args.verbose > 1 else
                        logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s: %(message)s")
    if args.window_days < 1:
        log.error("--window-days must be at least 1")
        return EXIT_CONFIG
    try:
        return args.func(args)
    except InputError as exc:
        log.error("%s", exc)
        return EXIT_INPUT
    except ConfigError as exc:
        log.error("config: %s", exc)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
