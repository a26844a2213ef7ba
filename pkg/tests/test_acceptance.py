"""Acceptance criteria 1-10. Each test prints one PASS/FAIL line.

Time budgets and tolerances are pinned here; every comparison is exact.
"""

import os
import random
import time
from collections import Counter
from datetime import date, datetime, timezone

import pytest

from hspkit import cli
from hspkit.classify import (AggregationPosition as AP, CommunityConfig, CommunityLabel as CL,
                             UseCaseHint, cidr_bucket, classify_communities,
                             relative_hit_rate_diff)
from hspkit.mrt import AS_TRANS, PathSegment, RecordKind, RouteRecord, decode_mrt
from hspkit.mrtwrite import encode_rib_dump, encode_updates
from hspkit.prefix import Prefix, PrefixError, is_hyper_specific, parse_prefix
from hspkit.registry import RoaIndex, RoaRecord, rov_validate
from hspkit.report import anchor_positions
from hspkit.sanitize import RuleKind, Sanitizer, apply_filters, default_rules
from hspkit.timeline import ObservationWindow, consistency, replay, window_consistency

from clifix import VERBS, build_fixture, run_verb, scan, tree_digest
from gen import rand_record
from oracles import (brute_rov, brute_window_consistency, hsp_by_mask, naive_consistency,
                     naive_replay, standard_rov)

# time budgets in seconds
BUDGET = {1: 1.0, 2: 300.0, 3: 120.0, 4: 60.0, 5: 120.0, 9: 1800.0}
FUZZ_INPUTS = 100_000
ROUND_TRIP_RECORDS = 1_000
REPLAY_STREAMS = 500
RUNS = 3
HSP_SHARE_BAND = (0.01, 0.30)


@pytest.fixture
def verdict(capsys):
    def emit(n, ok, detail):
        with capsys.disabled():
            print(f"\nacceptance {n:>2}: {'PASS' if ok else 'FAIL'}  {detail}")
        assert ok, detail
    return emit


# 1 -------------------------------------------------------------------------

def test_criterion_01_hsp_predicate(verdict):
    t0 = time.perf_counter()
    lengths = [(4, n) for n in range(33)] + [(6, n) for n in range(1, 129)]
    wrong = [(f, n) for f, n in lengths
             if is_hyper_specific(Prefix(f, 0, n)) != hsp_by_mask(f, n)]
    # the boundary itself: /24 and /48 are not hyper-specific, /25 and /49 are
    edges = (not is_hyper_specific(parse_prefix("192.0.2.0/24"))
             and is_hyper_specific(parse_prefix("192.0.2.0/25"))
             and not is_hyper_specific(parse_prefix("2001:db8::/48"))
             and is_hyper_specific(parse_prefix("2001:db8::/49")))
    dt = time.perf_counter() - t0
    ok = len(lengths) == 161 and not wrong and edges and dt < BUDGET[1]
    verdict(1, ok, f"{len(lengths)} lengths, {len(wrong)} mismatches, {dt:.3f}s")


# 2 -------------------------------------------------------------------------

def test_criterion_02_mrt_round_trip_and_fuzz(verdict):
    t0 = time.perf_counter()
    rng = random.Random(2)
    mismatches = 0
    total = 0
    for as4, extended in ((True, False), (False, False), (True, True)):
        recs = [rand_record(rng, rng.choice([RecordKind.ANNOUNCEMENT, RecordKind.WITHDRAWAL]),
                            two_byte=not as4, extended=extended) for _ in range(ROUND_TRIP_RECORDS)]
        out, stats = decode_mrt(encode_updates(recs, as4=as4, extended=extended), collector="rc")
        mismatches += (out != recs) + stats.error_count
        total += len(recs)
    ribs = [rand_record(rng, RecordKind.RIB_ENTRY, ts=1600000000.0) for _ in range(ROUND_TRIP_RECORDS)]
    out, stats = decode_mrt(encode_rib_dump(ribs, 1600000000), collector="rc")
    key = lambda r: (r.prefix, r.peer_asn, r.peer_address)
    mismatches += (sorted(out, key=key) != sorted(ribs, key=key)) + stats.error_count
    total += len(ribs)

    seeds = [encode_updates([rand_record(rng) for _ in range(10)]),
             encode_rib_dump([rand_record(rng, RecordKind.RIB_ENTRY, ts=1.0) for _ in range(10)], 1)]
    crashes = []
    for i in range(FUZZ_INPUTS):
        if i % 2:
            data = rng.randbytes(rng.randint(0, 120))
        else:
            buf = bytearray(rng.choice(seeds))
            for _ in range(rng.randint(1, 6)):
                buf[rng.randrange(len(buf))] = rng.getrandbits(8)
            data = bytes(buf[:rng.randint(0, len(buf))])
        try:
            decode_mrt(data)
        except Exception as exc:  # any exception escaping the decoder is a crash
            crashes.append((i, repr(exc)))
    dt = time.perf_counter() - t0
    ok = not mismatches and not crashes and dt < BUDGET[2]
    verdict(2, ok, f"{total} records round-tripped, {mismatches} mismatches; "
                   f"{FUZZ_INPUTS} fuzz inputs, {len(crashes)} crashes; {dt:.1f}s")


# 3 -------------------------------------------------------------------------

_PFX = [parse_prefix(t) for t in ("11.0.0.0/25", "11.0.0.128/25", "11.0.1.0/30", "2a00::/64")]
_PEERS = [(1, "192.0.2.1"), (1, "192.0.2.2"), (2, "192.0.2.3"), (3, "2001:db8::3")]


def _event(t, kind, peer, pfx):
    asn, addr = _PEERS[peer]
    path = (PathSegment.sequence(asn, 9),) if kind is not RecordKind.WITHDRAWAL else ()
    return RouteRecord(float(t), "rc", asn, addr, _PFX[pfx], kind, path)


def test_criterion_03_replay_against_simulator(verdict):
    t0 = time.perf_counter()
    bad = []
    for seed in range(REPLAY_STREAMS):
        rng = random.Random(seed)
        end = rng.randint(20, 400)
        ribs = [_event(0, RecordKind.RIB_ENTRY, p, q)
                for p in range(len(_PEERS)) for q in range(len(_PFX)) if rng.random() < 0.3]
        ups = [_event(rng.randint(0, end + 10),
                      rng.choice([RecordKind.ANNOUNCEMENT, RecordKind.WITHDRAWAL]),
                      rng.randrange(len(_PEERS)), rng.randrange(len(_PFX)))
               for _ in range(rng.randint(0, 60))]
        window = ObservationWindow(0, end)
        got = replay(ribs, ups, window)
        want = naive_replay(ribs, ups, 0, end)
        if sorted((iv.prefix, iv.feeder, iv.start, iv.end) for iv in got) != want:
            bad.append(seed)
            continue
        if any(consistency(p, got, window) != naive_consistency(want, p, 0, end) for p in _PFX):
            bad.append(seed)
    dt = time.perf_counter() - t0
    ok = not bad and dt < BUDGET[3]
    verdict(3, ok, f"{REPLAY_STREAMS} streams, {len(bad)} mismatches {bad[:5]}, {dt:.1f}s")


# 4 -------------------------------------------------------------------------

def test_criterion_04_window_consistency(verdict):
    t0 = time.perf_counter()
    rng = random.Random(4)
    bad = 0
    cases = 0
    for w in range(1, 15):
        for _ in range(40):
            d = rng.randint(w + 2, w + 25)
            days = [{rng.randrange(50) for _ in range(rng.randint(0, 20))} for _ in range(d)]
            got = window_consistency(days, w)
            want = brute_window_consistency(days, w)
            exact = [f for f in want if f is not None]
            cases += 1
            if list(got.fractions) != [None if f is None else float(f) for f in want]:
                bad += 1
            elif exact and got.mean != float(sum(exact) / len(exact)):
                bad += 1
            elif got.skipped != want.count(None):
                bad += 1
    # constructed dataset: a sliding population S(t) = {t + b : b in B} with
    # the offsets spread so a longer look-back keeps catching more of it
    offsets = {0, 1, 2, 4, 7, 11, 16, 22, 29, 37}
    days = [{t + b for b in offsets} for t in range(60)]
    means = [window_consistency(days, w).mean for w in range(1, 15)]
    monotone = all(a <= b for a, b in zip(means, means[1:]))
    rising = means[-1] > means[0]
    dt = time.perf_counter() - t0
    ok = not bad and monotone and rising and dt < BUDGET[4]
    verdict(4, ok, f"{cases} random cases w=1..14, {bad} mismatches; constructed means "
                   f"{means[0]:.3f} -> {means[-1]:.3f} non-decreasing={monotone}; {dt:.1f}s")


# 5 -------------------------------------------------------------------------

def test_criterion_05_rov_exhaustive(verdict):
    t0 = time.perf_counter()
    root = parse_prefix("10.20.0.0/20")
    universe = [Prefix(4, root.bits | (k << (32 - n)), n)
                for n in range(20, 33) for k in range(1 << (n - 20))]
    asns = (0, 64496, 64497)
    # every single ROA on the /20 (3 ASNs x all max-lengths), then pairs with a
    # nested ROA so the four-way preference is exercised
    configs = [[RoaRecord(root, m, a)] for a in asns for m in range(20, 33)]
    inner = parse_prefix("10.20.4.0/24")
    pairs = [[RoaRecord(root, m, a), RoaRecord(inner, m2, b)]
             for a in asns for b in asns for m in (20, 24, 28, 32) for m2 in (24, 28, 32)]
    nested = [p for p in universe if inner.contains(p)]
    checked = bad = 0
    seen = Counter()
    for roas, prefixes in [(c, universe) for c in configs] + [(c, nested) for c in pairs]:
        index = RoaIndex(roas)
        for p in prefixes:
            for origin in asns:
                status = rov_validate(p, origin, index)
                seen[status.value] += 1
                checked += 1
                if status.value != brute_rov(p, origin, roas) or \
                        status.collapsed != standard_rov(p, origin, roas):
                    bad += 1
    outside = parse_prefix("10.21.0.0/24")
    not_found = all(rov_validate(outside, a, RoaIndex(c)).value == "NotFound" for c in configs for a in asns)
    dt = time.perf_counter() - t0
    ok = not bad and not_found and len(seen) == 4 and dt < BUDGET[5]
    verdict(5, ok, f"{len(universe)} prefixes, {checked} validations, {bad} mismatches, "
                   f"statuses {dict(sorted(seen.items()))}; {dt:.1f}s")


# 6 -------------------------------------------------------------------------

def _agg_route(anchor, path, agg=None, atomic=False, peer=64500):
    segs = tuple(path)
    return RouteRecord(0.0, "rc", peer, "192.0.2.1", parse_prefix(anchor), RecordKind.ANNOUNCEMENT,
                       segs, (), None if agg is None else (agg, "10.0.0.1"), atomic)


def test_criterion_06_aggregation_positions(verdict):
    seq = PathSegment.sequence
    fixture = [
        # anchor A: aggregator is the origin
        _agg_route("11.0.1.0/24", [seq(64500, 64501, 64502)], 64502),
        # anchor B: aggregator sits on the path
        _agg_route("11.0.2.0/24", [seq(64500, 64501, 64502)], 64501),
        # anchor C: aggregator is not on the path; D: AS_TRANS aggregator
        _agg_route("11.0.3.0/24", [seq(64500, 64501, 64502)], 65010),
        _agg_route("11.0.4.0/24", [seq(64500, 64502)], AS_TRANS),
        # anchor E: only excluded routes (ATOMIC_AGGREGATE, AS_SET) and one without aggregator
        _agg_route("11.0.5.0/24", [seq(64500, 64502)], 64502, atomic=True),
        _agg_route("11.0.5.0/24", [seq(64500), PathSegment.as_set(64502, 64503)], 64502, peer=64510),
        _agg_route("11.0.5.0/24", [seq(64511, 64502)], peer=64511),
        # anchor F: feeders disagree (Origin vs OnPath) -> Multiple
        _agg_route("11.0.6.0/24", [seq(64500, 64501, 64502)], 64502),
        _agg_route("11.0.6.0/24", [seq(64520, 64501, 64502)], 64501, peer=64520),
        # anchor G: one Origin route plus an excluded one -> Origin
        _agg_route("11.0.7.0/24", [seq(64500, 64502)], 64502),
        _agg_route("11.0.7.0/24", [seq(64530, 64502)], 64530, atomic=True, peer=64530),
        # not an anchor length: ignored
        _agg_route("11.0.8.0/25", [seq(64500, 64502)], 64502),
    ]
    warnings = Counter()
    got = {str(k): v for k, v in anchor_positions(fixture, warnings).items()}
    want = {"11.0.1.0/24": AP.ORIGIN, "11.0.2.0/24": AP.ON_PATH, "11.0.3.0/24": AP.OFF_PATH,
            "11.0.4.0/24": AP.OFF_PATH, "11.0.6.0/24": AP.MULTIPLE, "11.0.7.0/24": AP.ORIGIN}
    classes = set(got.values())
    ok = (got == want and warnings["as_trans_aggregator"] == 1
          and classes == {AP.ORIGIN, AP.ON_PATH, AP.OFF_PATH, AP.MULTIPLE})
    verdict(6, ok, f"{len(fixture)} routes, anchors {len(got)}/{len(want)} as expected, "
                   f"classes {sorted(c.value for c in classes)}, excluded-only anchor dropped")


# 7 -------------------------------------------------------------------------

def _utc(d):
    return datetime(d.year, d.month, d.day, 12, tzinfo=timezone.utc).timestamp()


def _rule_candidates(rule):
    """Records the rule should drop, one per timeframe (or one if none)."""
    family = rule.family or 4
    hsp = "11.1.2.0/25" if family == 4 else "2a00:1::/64"
    frames = rule.timeframes or ((date(2020, 6, 1), None),)
    out = []
    for start, _ in frames:
        t = _utc(start)
        mk = lambda prefix, path, peer=64500, **kw: RouteRecord(
            t, "rc", peer, "192.0.2.1", parse_prefix(prefix), RecordKind.ANNOUNCEMENT,
            (PathSegment.sequence(*path),) if path else (), **kw)
        if rule.kind is RuleKind.PRIVATE_ORIGIN_ASN:
            out.append(mk("11.1.2.0/24", (64500, rule.params[0][0])))
        elif rule.kind in (RuleKind.PRIVATE_OR_RESERVED_PREFIX, RuleKind.CLASS_DE):
            out.append(mk(str(rule.params[0].truncate(rule.params[0].length)), (64500, 64501)))
        elif rule.kind is RuleKind.ABNORMAL_LENGTH:
            out.append(mk("11.0.0.1/32", (64500, 64501), raw_length=33))
        elif rule.kind is RuleKind.NO_ORIGIN:
            out.append(mk("11.1.2.0/24", ()))
        elif rule.kind is RuleKind.FEEDER_INTERNAL:
            out.append(mk(hsp, (64500,)))
        elif rule.kind is RuleKind.NOISY_ORIGIN:
            out.append(mk(hsp, (64500, rule.params[0][0])))
        elif rule.kind is RuleKind.NOISY_PEER:
            peer = rule.params[0][0]
            out.append(mk(hsp, (peer, 64501), peer=peer))
    return out


def test_criterion_07_filter_rows(verdict):
    rules = default_rules()
    missing = []
    for rule in rules:
        witness = None
        for rec in _rule_candidates(rule):
            first = apply_filters(rec, rules)
            alone = [r.id for r in rules if not apply_filters(rec, [r]).kept]
            if first.rule_id == rule.id and alone == [rule.id]:
                witness = rec
                break
        if witness is None:
            missing.append(rule.id)
    rng = random.Random(7)
    unbalanced = 0
    for _ in range(50):
        s = Sanitizer(rules)
        kept = list(s.filter(rand_record(rng, rng.choice(list(RecordKind))) for _ in range(400)))
        if not (len(kept) == s.kept and s.kept + sum(s.dropped.values()) == s.total == 400):
            unbalanced += 1
    ok = not missing and not unbalanced
    verdict(7, ok, f"{len(rules) - len(missing)}/{len(rules)} rows have an exclusive witness"
                   f"{' (none for ' + ', '.join(missing) + ')' if missing else ''}; "
                   f"accounting identity broken in {unbalanced}/50 corpora")


# 8 -------------------------------------------------------------------------

def test_criterion_08_classifiers(verdict):
    gaps, overlaps = [], []
    for family, width in ((4, 32), (6, 128)):
        for n in range(width + 1):
            p = Prefix(family, 0, n)
            try:
                hint = cidr_bucket(p)
            except PrefixError:
                hint = None
            if is_hyper_specific(p) and hint is None:
                gaps.append((family, n))
            if not is_hyper_specific(p) and hint is not None:
                overlaps.append((family, n))
            if hint is not None and hint not in UseCaseHint:
                overlaps.append((family, n))
    off, on = CommunityConfig(x666=False), CommunityConfig(x666=True)
    comm_ok = CL.BLACKHOLE in classify_communities([(65535, 666)], off)
    comm_ok &= all(CL.BLACKHOLE in classify_communities([(x, 666)], on) for x in range(65536))
    comm_ok &= not any(CL.BLACKHOLE in classify_communities([(x, 666)], off)
                       for x in range(65536) if x != 65535)
    up, down = relative_hit_rate_diff(0.06, 0.01), relative_hit_rate_diff(0.001, 0.01)
    ok = not gaps and not overlaps and comm_ok and up == 500.0 and down == -90.0
    verdict(8, ok, f"cidr gaps {gaps} overlaps {overlaps}; 666 handling ok={comm_ok}; "
                   f"hit-rate diffs {up:+g}% {down:+g}%")


# 9 -------------------------------------------------------------------------

def test_criterion_09_real_collector_day(verdict, tmp_path):
    rib = os.environ.get("HSPKIT_SMOKE_RIB")
    updates = os.environ.get("HSPKIT_SMOKE_UPDATES", "").split()
    if not rib or not os.path.isfile(rib):
        verdict(9, False, "no real collector data: set HSPKIT_SMOKE_RIB to one RIB dump and "
                          "HSPKIT_SMOKE_UPDATES to its update files (space separated)")
    t0 = time.perf_counter()
    store = tmp_path / "store"
    code = cli.main(["scan", "--store", str(store), "--out-dir", str(tmp_path / "scan"),
                     f"rc={rib}", *[f"rc={u}" for u in updates]])
    shares = []
    for i in range(2):
        out = tmp_path / f"export{i}"
        assert cli.main(["share", "--store", str(store), "--out-dir", str(out)]) == 0
        assert cli.main(["export", "--store", str(store), "--out-dir", str(out)]) == 0
        shares.append(tree_digest(out / "feeds"))
    import json
    with open(tmp_path / "export0" / "feeds" / "share.json") as fh:
        rows = json.load(fh)["rows"]
    hsp = sum(r["prefix_count"] for r in rows if r["group"] == "hsp")
    total = sum(r["prefix_count"] for r in rows if r["group"] != "hsp")
    share = hsp / total if total else 0.0
    dt = time.perf_counter() - t0
    ok = (code in (0, 3) and HSP_SHARE_BAND[0] <= share <= HSP_SHARE_BAND[1]
          and shares[0] == shares[1] and dt < BUDGET[9])
    verdict(9, ok, f"scan exit {code}, HSP share {share:.4f} of {total} visible prefixes, "
                   f"export stable={shares[0] == shares[1]}, {dt:.0f}s")


# 10 ------------------------------------------------------------------------

def test_criterion_10_cli_determinism(verdict, tmp_path):
    _, paths = build_fixture(str(tmp_path))
    runs = []
    codes = set()
    for i in range(RUNS):
        store = tmp_path / f"store{i}"
        codes.add(scan(store, paths))
        out = tmp_path / f"out{i}"
        for verb in sorted(VERBS):
            codes.add(run_verb(verb, store, out / verb, str(tmp_path)))
            codes.add(run_verb(verb, store, out / f"{verb}-json", str(tmp_path), fmt="json"))
        digest = tree_digest(out)
        digest.update({f"store/{k}": v for k, v in tree_digest(store).items()})
        runs.append(digest)
    differing = sorted(k for k in runs[0] if any(r.get(k) != runs[0][k] for r in runs[1:]))
    ok = codes == {0} and not differing and all(set(r) == set(runs[0]) for r in runs)
    verdict(10, ok, f"{len(VERBS) + 1} commands x {RUNS} runs, {len(runs[0])} files hashed, "
                    f"{len(differing)} differ, exit codes {sorted(codes)}")
