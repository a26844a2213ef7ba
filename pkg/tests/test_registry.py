import io
import random

import pytest
from hypothesis import given, settings, strategies as st

from hspkit.prefix import Prefix, parse_prefix
from hspkit.registry import (AnchorSource, OriginAttribution as OA, RoaHspKind, RoaIndex,
                             RoaRecord, RovStatus, RpslStats, anchor_dataset_attribution,
                             attribute_origins, load_roa_csv, parse_rpsl, roa_hsp_kind,
                             rov_validate)

from gen import rand_prefix
from oracles import brute_rov, covering_scan, standard_rov

P = parse_prefix


def roa(text, maxlen, asn):
    return RoaRecord(P(text), maxlen, asn)


def test_roa_kind_examples():
    assert roa_hsp_kind(roa("192.0.2.0/25", 32, 1)) is RoaHspKind.EXPLICIT
    assert roa_hsp_kind(roa("192.0.2.0/24", 25, 1)) is RoaHspKind.IMPLICIT
    assert roa_hsp_kind(roa("192.0.2.0/24", 24, 1)) is RoaHspKind.NON_HSP
    assert roa_hsp_kind(roa("2001:db8::/48", 64, 1)) is RoaHspKind.IMPLICIT


def test_roa_record_validation():
    with pytest.raises(ValueError):
        roa("192.0.2.0/24", 23, 1)
    with pytest.raises(ValueError):
        roa("192.0.2.0/24", 33, 1)


@given(st.integers(0, 32), st.integers(0, 32))
def test_roa_kind_monotone_in_max_length(length, extra):
    lo = min(length + extra, 32)
    hi = 32
    a = roa_hsp_kind(RoaRecord(Prefix(4, 0, length), lo, 1))
    b = roa_hsp_kind(RoaRecord(Prefix(4, 0, length), hi, 1))
    if a is not RoaHspKind.NON_HSP:
        assert b is not RoaHspKind.NON_HSP


def test_rov_examples():
    r1 = [roa("192.0.2.0/24", 24, 64496)]
    assert rov_validate(P("192.0.2.0/25"), 64496, r1) is RovStatus.INVALID_LENGTH
    assert rov_validate(P("192.0.2.0/25"), 64511, r1) is RovStatus.INVALID_BOTH
    assert rov_validate(P("192.0.2.0/25"), 64496, [roa("192.0.2.0/24", 25, 64496)]) is RovStatus.VALID
    assert rov_validate(P("198.51.100.0/25"), 64496, r1) is RovStatus.NOT_FOUND
    assert rov_validate(P("192.0.2.0/24"), 64511, r1) is RovStatus.INVALID_ORIGIN


def test_rov_as0_never_valid():
    assert rov_validate(P("192.0.2.0/24"), 0, [roa("192.0.2.0/24", 24, 0)]) is RovStatus.INVALID_ORIGIN


def test_rov_preference_over_several_roas():
    roas = [roa("192.0.2.0/24", 24, 1), roa("192.0.0.0/16", 32, 2)]
    # ROA 1 gives InvalidLength, ROA 2 gives InvalidOrigin -> InvalidLength preferred
    assert rov_validate(P("192.0.2.0/25"), 1, roas) is RovStatus.INVALID_LENGTH
    assert rov_validate(P("192.0.2.0/25"), 2, roas) is RovStatus.VALID
    assert RovStatus.INVALID_BOTH.collapsed == "Invalid"


@settings(max_examples=100, deadline=None)
@given(st.integers(0, 2 ** 31))
def test_rov_matches_brute_force(seed):
    rng = random.Random(seed)
    roas = []
    for _ in range(rng.randint(0, 8)):
        p = rand_prefix(rng, 4, rng.randint(8, 24))
        roas.append(RoaRecord(p, rng.randint(p.length, 32), rng.choice([0, 1, 2, 3])))
    index = RoaIndex(roas)
    for _ in range(30):
        if roas and rng.random() < 0.7:
            base = rng.choice(roas).prefix
            length = rng.randint(base.length, 32)
            extra = rng.getrandbits(length - base.length) << (32 - length) if length > base.length else 0
            p = Prefix(4, base.bits | extra, length)
        else:
            p = rand_prefix(rng, 4, rng.randint(8, 32))
        origin = rng.choice([0, 1, 2, 3, 4])
        status = rov_validate(p, origin, index)
        assert status.value == brute_rov(p, origin, roas)
        assert status.collapsed == standard_rov(p, origin, roas)


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 2 ** 31))
def test_roa_covering_matches_scan(seed):
    rng = random.Random(seed)
    roas = [RoaRecord(rand_prefix(rng, 6, rng.randint(16, 48)), 64, 1) for _ in range(30)]
    roas += [RoaRecord(r.prefix.truncate(r.prefix.length - 4), 64, 2) for r in roas[:10]]
    index = RoaIndex(roas)
    for r in roas[:10]:
        p = r.prefix
        want = {q for q in covering_scan({x.prefix for x in roas}, p)}
        got = {q.prefix for q in roas if q.prefix in want}
        assert {(m, a) for m, a in index.covering(p)} == {(x.max_length, x.asn) for x in roas
                                                          if x.prefix in got}


RPSL = """\
% comment line
route:      192.0.2.0/25
descr:      test
origin:     AS64496
source:     RIPE

route6:     2001:db8::/56
origin:     AS64497 # trailing comment
mnt-by:     X
source:     RADB

route:      192.0.2.128/25
descr:      no origin here

aut-num:    AS64496

route:
            198.51.100.0/24
origin:     AS64498

route:      192.0.2.0/25
origin:     AS64496
source:     RIPE
"""


def test_parse_rpsl_fixture():
    stats = RpslStats()
    objs = parse_rpsl(RPSL, stats=stats)
    assert [(str(o.prefix), o.origin_asn, o.source_db) for o in objs] == [
        ("192.0.2.0/25", 64496, "RIPE"), ("2001:db8::/56", 64497, "RADB"),
        ("198.51.100.0/24", 64498, "")]
    assert stats.objects == 6 and stats.missing_origin == 1 and stats.duplicates == 1


def test_parse_rpsl_minimal():
    assert len(parse_rpsl("route: 192.0.2.0/25\norigin: AS64496")) == 1
    stats = RpslStats()
    assert parse_rpsl("route: 192.0.2.0/25\ndescr: x\n", stats=stats) == []
    assert stats.missing_origin == 1


def test_load_roa_csv():
    text = "prefix,max_length,asn,date\n192.0.2.0/24,25,AS64496,2021-01-01\n2001:db8::/32,,64497,\n"
    roas = load_roa_csv(io.StringIO(text))
    assert roas[0].max_length == 25 and roas[0].asn == 64496 and str(roas[0].snapshot_date) == "2021-01-01"
    assert roas[1].max_length == 32
    with pytest.raises(ValueError):
        load_roa_csv(io.StringIO("192.0.2.0/24,20,1\n"))


def test_attribute_origins_examples():
    m = attribute_origins({1, 2}, {2, 3}, {4})
    assert m == {1: OA.BGP_ONLY, 2: OA.MULTIPLE, 3: OA.IRR_ONLY, 4: OA.RPKI_ONLY}
    assert attribute_origins(set(), set(), set()) == {}


@given(st.sets(st.integers(0, 50)), st.sets(st.integers(0, 50)), st.sets(st.integers(0, 50)))
def test_attribute_origins_partition(a, b, c):
    m = attribute_origins(a, b, c)
    assert set(m) == a | b | c
    for asn, cls in m.items():
        assert (cls is OA.MULTIPLE) == (sum(asn in s for s in (a, b, c)) >= 2)


def test_anchor_attribution_examples():
    x, y, z = P("192.0.2.0/24"), P("198.51.100.0/24"), P("203.0.113.0/24")
    m = anchor_dataset_attribution(collectors={x}, irr={x}, aggregated={y}, rpki={z})
    assert m == {x: AnchorSource.MULTIPLE, y: AnchorSource.AGGREGATED, z: AnchorSource.RPKI}
    assert len(m) == 3
