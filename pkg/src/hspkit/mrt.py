"""MRT (RFC 6396) decoding into normalized route records.

Supported: TABLE_DUMP, TABLE_DUMP_V2 (PEER_INDEX_TABLE, RIB_IPV4/IPV6_UNICAST
and their ADDPATH variants) and BGP4MP / BGP4MP_ET (MESSAGE, MESSAGE_AS4 and
the _LOCAL variants). Everything else is skipped and counted.
"""

from __future__ import annotations

import enum
import io
import logging
import socket
import struct
from dataclasses import dataclass, field
from typing import BinaryIO, Iterator, Optional, Union

from .prefix import MAX_LENGTH, Prefix, canonicalize

__all__ = [
    "RecordKind",
    "SegmentKind",
    "PathSegment",
    "RouteRecord",
    "DecodeStats",
    "MrtDecodeError",
    "MrtReader",
    "decode_mrt",
    "origin_of",
    "hops_of",
    "AS_TRANS",
]

log = logging.getLogger(__name__)

AS_TRANS = 23456

# MRT types / subtypes
TABLE_DUMP = 12
TABLE_DUMP_V2 = 13
BGP4MP = 16
BGP4MP_ET = 17

PEER_INDEX_TABLE = 1
RIB_IPV4_UNICAST = 2
RIB_IPV6_UNICAST = 4
RIB_IPV4_UNICAST_ADDPATH = 8
RIB_IPV6_UNICAST_ADDPATH = 10

BGP4MP_STATE_CHANGE = 0
BGP4MP_MESSAGE = 1
BGP4MP_MESSAGE_AS4 = 4
BGP4MP_STATE_CHANGE_AS4 = 5
BGP4MP_MESSAGE_LOCAL = 6
BGP4MP_MESSAGE_AS4_LOCAL = 7

# path attribute type codes
ATTR_AS_PATH = 2
ATTR_ATOMIC_AGGREGATE = 6
ATTR_AGGREGATOR = 7
ATTR_COMMUNITIES = 8
ATTR_MP_REACH_NLRI = 14
ATTR_MP_UNREACH_NLRI = 15
ATTR_EXT_COMMUNITIES = 16
ATTR_AS4_PATH = 17
ATTR_AS4_AGGREGATOR = 18
ATTR_LARGE_COMMUNITIES = 32

MAX_RECORD_LENGTH = 1 << 28
_AFI_FAMILY = {1: 4, 2: 6}


class RecordKind(enum.Enum):
    ANNOUNCEMENT = "A"
    WITHDRAWAL = "W"
    RIB_ENTRY = "B"


class SegmentKind(enum.Enum):
    SEQUENCE = "seq"
    SET = "set"


@dataclass(frozen=True, slots=True)
class PathSegment:
    kind: SegmentKind
    asns: tuple

    def __post_init__(self):
        if not self.asns:
            raise ValueError("empty AS path segment")

    @classmethod
    def sequence(cls, *asns: int) -> "PathSegment":
        return cls(SegmentKind.SEQUENCE, tuple(asns))

    @classmethod
    def as_set(cls, *asns: int) -> "PathSegment":
        return cls(SegmentKind.SET, tuple(asns))

    def __str__(self) -> str:
        body = " ".join(str(a) for a in self.asns)
        return body if self.kind is SegmentKind.SEQUENCE else "{" + body + "}"


def origin_of(path) -> Optional[int]:
    """Last ASN of the path, or None when the path is empty or ends in a set."""
    if not path:
        return None
    last = path[-1]
    if last.kind is not SegmentKind.SEQUENCE:
        return None
    return last.asns[-1]


def hops_of(path) -> int:
    """AS hops after collapsing prepending; an AS_SET counts as one hop."""
    hops = 0
    prev = None
    for seg in path:
        if seg.kind is SegmentKind.SET:
            token = frozenset(seg.asns)
            if token != prev:
                hops += 1
            prev = token
            continue
        for asn in seg.asns:
            if asn != prev:
                hops += 1
            prev = asn
    return hops


@dataclass(frozen=True, slots=True)
class RouteRecord:
    timestamp: float
    collector_id: str
    peer_asn: int
    peer_address: str
    prefix: Prefix
    kind: RecordKind
    as_path: tuple = ()
    communities: tuple = ()
    aggregator: Optional[tuple] = None
    atomic_aggregate: bool = False
    large_communities: tuple = ()
    extended_communities: tuple = ()
    # declared NLRI length when it exceeded the family maximum (prefix is then clamped)
    raw_length: Optional[int] = None

    @property
    def origin_asn(self) -> Optional[int]:
        return origin_of(self.as_path)

    @property
    def length(self) -> int:
        return self.raw_length if self.raw_length is not None else self.prefix.length

    @property
    def feeder(self) -> tuple:
        return (self.peer_asn, self.peer_address)


@dataclass
class DecodeStats:
    records: int = 0
    mrt_messages: int = 0
    skipped_unknown: int = 0
    skipped_other: int = 0
    malformed: int = 0
    noncanonical: int = 0
    abnormal_length: int = 0
    truncated: bool = False
    errors: list = field(default_factory=list)

    def merge(self, other: "DecodeStats") -> None:
        for name in ("records", "mrt_messages", "skipped_unknown", "skipped_other",
                     "malformed", "noncanonical", "abnormal_length"):
            setattr(self, name, getattr(self, name) + getattr(other, name))
        self.truncated = self.truncated or other.truncated
        self.errors.extend(other.errors)

    @property
    def error_count(self) -> int:
        return self.malformed + int(self.truncated)


class MrtDecodeError(Exception):
    def __init__(self, offset: int, message: str):
        super().__init__(f"offset {offset}: {message}")
        self.offset = offset
        self.message = message


class _Malformed(Exception):
    pass


@dataclass
class _Attrs:
    as_path: tuple = ()
    communities: tuple = ()
    aggregator: Optional[tuple] = None
    atomic_aggregate: bool = False
    large_communities: tuple = ()
    extended_communities: tuple = ()
    announced: list = field(default_factory=list)
    withdrawn: list = field(default_factory=list)


def _ip_text(raw: bytes) -> str:
    if len(raw) == 4:
        return socket.inet_ntop(socket.AF_INET, raw)
    if len(raw) == 16:
        return socket.inet_ntop(socket.AF_INET6, raw)
    raise _Malformed(f"bad address length {len(raw)}")


class MrtReader:
    """Iterate the route records of one MRT stream.

    ``source`` is bytes or a binary file object (already decompressed).
    Malformed messages are counted in ``stats`` and skipped; with
    ``strict=True`` they raise :class:`MrtDecodeError` instead. A truncated
    trailing message ends iteration (recorded in ``stats.errors``).
    """

    def __init__(self, source: Union[bytes, bytearray, memoryview, BinaryIO],
                 collector: str = "", strict: bool = False):
        if isinstance(source, (bytes, bytearray, memoryview)):
            source = io.BytesIO(bytes(source))
        self._fh = source
        self.collector = collector
        self.strict = strict
        self.stats = DecodeStats()
        self._peers = None
        self._attr_cache = {}

    def __iter__(self) -> Iterator[RouteRecord]:
        fh = self._fh
        offset = 0
        while True:
            header = fh.read(12)
            if not header:
                return
            if len(header) < 12:
                self._fatal(offset, "truncated MRT header")
                return
            ts, mtype, subtype, length = struct.unpack("!IHHI", header)
            if length > MAX_RECORD_LENGTH:
                self._fatal(offset, f"implausible MRT length {length}")
                return
            body = fh.read(length)
            if len(body) < length:
                self._fatal(offset, "truncated MRT body")
                return
            self.stats.mrt_messages += 1
            try:
                records = self._dispatch(ts, mtype, subtype, body)
            except (_Malformed, struct.error, IndexError, ValueError) as exc:
                self.stats.malformed += 1
                self.stats.errors.append((offset, str(exc) or type(exc).__name__))
                if self.strict:
                    raise MrtDecodeError(offset, str(exc)) from None
                records = ()
            for rec in records:
                self.stats.records += 1
                yield rec
            offset += 12 + length

    def _fatal(self, offset: int, message: str) -> None:
        self.stats.truncated = True
        self.stats.errors.append((offset, message))
        if self.strict:
            raise MrtDecodeError(offset, message)

    def _dispatch(self, ts, mtype, subtype, body):
        if mtype == TABLE_DUMP_V2:
            if subtype == PEER_INDEX_TABLE:
                self._peers = self._peer_index(body)
                return ()
            if subtype in (RIB_IPV4_UNICAST, RIB_IPV4_UNICAST_ADDPATH):
                return self._rib(ts, body, 4, subtype == RIB_IPV4_UNICAST_ADDPATH)
            if subtype in (RIB_IPV6_UNICAST, RIB_IPV6_UNICAST_ADDPATH):
                return self._rib(ts, body, 6, subtype == RIB_IPV6_UNICAST_ADDPATH)
        elif mtype in (BGP4MP, BGP4MP_ET):
            usec = 0
            if mtype == BGP4MP_ET:
                if len(body) < 4:
                    raise _Malformed("missing extended timestamp")
                (usec,) = struct.unpack_from("!I", body)
                body = body[4:]
            if subtype in (BGP4MP_MESSAGE, BGP4MP_MESSAGE_LOCAL):
                return self._bgp4mp(ts + usec / 1e6, body, as4=False)
            if subtype in (BGP4MP_MESSAGE_AS4, BGP4MP_MESSAGE_AS4_LOCAL):
                return self._bgp4mp(ts + usec / 1e6, body, as4=True)
            if subtype in (BGP4MP_STATE_CHANGE, BGP4MP_STATE_CHANGE_AS4):
                self.stats.skipped_other += 1
                return ()
        elif mtype == TABLE_DUMP:
            if subtype in (1, 2):
                return self._table_dump_v1(ts, body, _AFI_FAMILY[subtype])
        self.stats.skipped_unknown += 1
        return ()

    # -- TABLE_DUMP_V2 -------------------------------------------------

    def _peer_index(self, body: bytes):
        pos = 4  # collector BGP id
        (view_len,) = struct.unpack_from("!H", body, pos)
        pos += 2 + view_len
        (count,) = struct.unpack_from("!H", body, pos)
        pos += 2
        peers = []
        for _ in range(count):
            ptype = body[pos]
            pos += 5  # type + peer BGP id
            alen = 16 if ptype & 1 else 4
            addr = _ip_text(body[pos:pos + alen])
            pos += alen
            if ptype & 2:
                (asn,) = struct.unpack_from("!I", body, pos)
                pos += 4
            else:
                (asn,) = struct.unpack_from("!H", body, pos)
                pos += 2
            peers.append((asn, addr))
        if pos != len(body):
            raise _Malformed("trailing bytes in peer index table")
        return peers

    def _rib(self, ts, body: bytes, family: int, addpath: bool):
        if self._peers is None:
            raise _Malformed("RIB entry before PEER_INDEX_TABLE")
        pos = 4  # sequence number
        prefix, raw_len, pos = self._read_nlri(body, pos, family)
        (count,) = struct.unpack_from("!H", body, pos)
        pos += 2
        out = []
        for _ in range(count):
            idx, _orig, = struct.unpack_from("!HI", body, pos)
            pos += 6
            if addpath:
                pos += 4
            (alen,) = struct.unpack_from("!H", body, pos)
            pos += 2
            blob = body[pos:pos + alen]
            if len(blob) != alen:
                raise _Malformed("truncated RIB entry attributes")
            pos += alen
            if idx >= len(self._peers):
                raise _Malformed(f"peer index {idx} out of range")
            peer_asn, peer_addr = self._peers[idx]
            attrs = self._attrs(blob, as_size=4, rib=True)
            out.append(self._make(ts, peer_asn, peer_addr, prefix, raw_len,
                                  RecordKind.RIB_ENTRY, attrs))
        if pos != len(body):
            raise _Malformed("trailing bytes in RIB record")
        return out

    def _table_dump_v1(self, ts, body: bytes, family: int):
        alen = 4 if family == 4 else 16
        pos = 4  # view number, sequence
        raw = body[pos:pos + alen]
        pos += alen
        length = body[pos]
        pos += 2  # length + status
        pos += 4  # originated time
        peer_addr = _ip_text(body[pos:pos + alen])
        pos += alen
        (peer_asn, attr_len) = struct.unpack_from("!HH", body, pos)
        pos += 4
        blob = body[pos:pos + attr_len]
        if len(blob) != attr_len or len(raw) != alen:
            raise _Malformed("truncated TABLE_DUMP entry")
        if length > MAX_LENGTH[family]:
            raise _Malformed(f"bad prefix length {length}")
        prefix, ok = canonicalize(family, int.from_bytes(raw, "big"), length)
        if not ok:
            self.stats.noncanonical += 1
        attrs = self._attrs(blob, as_size=2, rib=True)
        return [self._make(ts, peer_asn, peer_addr, prefix, None, RecordKind.RIB_ENTRY, attrs)]

    # -- BGP4MP --------------------------------------------------------

    def _bgp4mp(self, ts, body: bytes, as4: bool):
        if as4:
            peer_asn, _local, _ifx, afi = struct.unpack_from("!IIHH", body)
            pos = 12
        else:
            peer_asn, _local, _ifx, afi = struct.unpack_from("!HHHH", body)
            pos = 8
        if afi not in _AFI_FAMILY:
            raise _Malformed(f"unknown AFI {afi}")
        alen = 4 if afi == 1 else 16
        peer_addr = _ip_text(body[pos:pos + alen])
        pos += 2 * alen
        msg = body[pos:]
        if len(msg) < 19:
            raise _Malformed("short BGP message")
        mlen, mtype = struct.unpack_from("!HB", msg, 16)
        if mlen != len(msg):
            raise _Malformed(f"BGP length {mlen} != {len(msg)}")
        if mtype != 2:
            self.stats.skipped_other += 1
            return ()
        pos = 19
        (wlen,) = struct.unpack_from("!H", msg, pos)
        pos += 2
        wend = pos + wlen
        if wend > len(msg):
            raise _Malformed("withdrawn routes overrun message")
        withdrawn = []
        while pos < wend:
            p, raw_len, pos = self._read_nlri(msg, pos, 4, end=wend)
            withdrawn.append((p, raw_len))
        (palen,) = struct.unpack_from("!H", msg, pos)
        pos += 2
        if pos + palen > len(msg):
            raise _Malformed("path attributes overrun message")
        attrs = self._attrs(msg[pos:pos + palen], as_size=4 if as4 else 2, rib=False)
        pos += palen
        announced = []
        while pos < len(msg):
            p, raw_len, pos = self._read_nlri(msg, pos, 4)
            announced.append((p, raw_len))

        out = []
        for p, raw_len in withdrawn + attrs.withdrawn:
            out.append(self._make(ts, peer_asn, peer_addr, p, raw_len, RecordKind.WITHDRAWAL, None))
        for p, raw_len in announced + attrs.announced:
            out.append(self._make(ts, peer_asn, peer_addr, p, raw_len, RecordKind.ANNOUNCEMENT, attrs))
        return out

    # -- shared pieces -------------------------------------------------

    def _make(self, ts, peer_asn, peer_addr, prefix, raw_len, kind, attrs):
        if attrs is None or kind is RecordKind.WITHDRAWAL:
            return RouteRecord(float(ts), self.collector, peer_asn, peer_addr, prefix,
                               kind, raw_length=raw_len)
        return RouteRecord(float(ts), self.collector, peer_asn, peer_addr, prefix, kind,
                           attrs.as_path, attrs.communities, attrs.aggregator,
                           attrs.atomic_aggregate, attrs.large_communities,
                           attrs.extended_communities, raw_len)

    def _read_nlri(self, buf: bytes, pos: int, family: int, end: Optional[int] = None):
        if end is None:
            end = len(buf)
        if pos >= end:
            raise _Malformed("missing NLRI length")
        length = buf[pos]
        nbytes = (length + 7) // 8
        pos += 1
        if pos + nbytes > end:
            raise _Malformed("NLRI overruns its field")
        width = MAX_LENGTH[family]
        raw = buf[pos:pos + nbytes]
        pos += nbytes
        raw_len = None
        if length > width:
            self.stats.abnormal_length += 1
            raw_len = length
            raw = raw[:width // 8]
            length = width
        bits = int.from_bytes(raw, "big") << (width - 8 * len(raw))
        prefix, ok = canonicalize(family, bits, length)
        if not ok:
            self.stats.noncanonical += 1
        return prefix, raw_len, pos

    def _attrs(self, blob: bytes, as_size: int, rib: bool) -> _Attrs:
        if not rib:
            # update attributes carry NLRI whose parsing updates stats; never cache
            return self._parse_attrs(blob, as_size, rib)
        key = (blob, as_size)
        cached = self._attr_cache.get(key)
        if cached is not None:
            return cached
        attrs = self._parse_attrs(blob, as_size, rib)
        if len(self._attr_cache) > 200_000:
            self._attr_cache.clear()
        self._attr_cache[key] = attrs
        return attrs

    def _parse_attrs(self, blob: bytes, as_size: int, rib: bool) -> _Attrs:
        attrs = _Attrs()
        as4_path = None
        as4_aggregator = None
        pos = 0
        n = len(blob)
        while pos < n:
            if pos + 3 > n:
                raise _Malformed("truncated attribute header")
            flags, code = blob[pos], blob[pos + 1]
            if flags & 0x10:
                (alen,) = struct.unpack_from("!H", blob, pos + 2)
                pos += 4
            else:
                alen = blob[pos + 2]
                pos += 3
            data = blob[pos:pos + alen]
            if len(data) != alen:
                raise _Malformed(f"attribute {code} overruns")
            pos += alen

            if code == ATTR_AS_PATH:
                attrs.as_path = _parse_as_path(data, as_size)
            elif code == ATTR_AS4_PATH:
                as4_path = _parse_as_path(data, 4)
            elif code == ATTR_ATOMIC_AGGREGATE:
                attrs.atomic_aggregate = True
            elif code == ATTR_AGGREGATOR:
                attrs.aggregator = _parse_aggregator(data)
            elif code == ATTR_AS4_AGGREGATOR:
                as4_aggregator = _parse_aggregator(data)
            elif code == ATTR_COMMUNITIES:
                if alen % 4:
                    raise _Malformed("bad COMMUNITIES length")
                vals = struct.unpack(f"!{alen // 2}H", data)
                attrs.communities = tuple(zip(vals[0::2], vals[1::2]))
            elif code == ATTR_LARGE_COMMUNITIES:
                if alen % 12:
                    raise _Malformed("bad LARGE_COMMUNITY length")
                vals = struct.unpack(f"!{alen // 4}I", data)
                attrs.large_communities = tuple(zip(vals[0::3], vals[1::3], vals[2::3]))
            elif code == ATTR_EXT_COMMUNITIES:
                if alen % 8:
                    raise _Malformed("bad EXTENDED_COMMUNITIES length")
                attrs.extended_communities = struct.unpack(f"!{alen // 8}Q", data)
            elif code == ATTR_MP_REACH_NLRI:
                # in RIB entries the prefix comes from the RIB record header
                if not rib:
                    attrs.announced = self._mp_reach(data)
            elif code == ATTR_MP_UNREACH_NLRI:
                if not rib:
                    attrs.withdrawn = self._mp_unreach(data)

        if as_size == 2:
            if as4_path is not None:
                attrs.as_path = _merge_as4_path(attrs.as_path, as4_path)
            if as4_aggregator is not None:
                attrs.aggregator = as4_aggregator
        return attrs

    def _mp_reach(self, data: bytes):
        afi, safi, nhlen = struct.unpack_from("!HBB", data)
        pos = 4 + nhlen + 1
        if pos > len(data):
            raise _Malformed("MP_REACH next hop overruns")
        if afi not in _AFI_FAMILY or safi != 1:
            return []
        family = _AFI_FAMILY[afi]
        out = []
        while pos < len(data):
            p, raw_len, pos = self._read_nlri(data, pos, family)
            out.append((p, raw_len))
        return out

    def _mp_unreach(self, data: bytes):
        afi, safi = struct.unpack_from("!HB", data)
        if afi not in _AFI_FAMILY or safi != 1:
            return []
        family = _AFI_FAMILY[afi]
        pos = 3
        out = []
        while pos < len(data):
            p, raw_len, pos = self._read_nlri(data, pos, family)
            out.append((p, raw_len))
        return out


def _parse_as_path(data: bytes, as_size: int) -> tuple:
    fmt = "!H" if as_size == 2 else "!I"
    segments = []
    pos = 0
    while pos < len(data):
        if pos + 2 > len(data):
            raise _Malformed("truncated AS_PATH segment")
        stype, count = data[pos], data[pos + 1]
        pos += 2
        end = pos + count * as_size
        if end > len(data):
            raise _Malformed("AS_PATH segment overruns")
        asns = struct.unpack(f"!{count}{fmt[1]}", data[pos:end])
        pos = end
        if count == 0 or stype in (3, 4):
            # empty and confederation segments carry no inter-AS hops
            continue
        if stype == 1:
            segments.append(PathSegment(SegmentKind.SET, asns))
        elif stype == 2:
            if segments and segments[-1].kind is SegmentKind.SEQUENCE:
                segments[-1] = PathSegment(SegmentKind.SEQUENCE, segments[-1].asns + asns)
            else:
                segments.append(PathSegment(SegmentKind.SEQUENCE, asns))
        else:
            raise _Malformed(f"unknown AS_PATH segment type {stype}")
    return tuple(segments)


def _parse_aggregator(data: bytes):
    if len(data) == 6:
        asn, = struct.unpack_from("!H", data)
        return asn, _ip_text(data[2:])
    if len(data) == 8:
        asn, = struct.unpack_from("!I", data)
        return asn, _ip_text(data[4:])
    raise _Malformed(f"bad AGGREGATOR length {len(data)}")


def _path_count(path) -> int:
    return sum(len(s.asns) if s.kind is SegmentKind.SEQUENCE else 1 for s in path)


def _merge_as4_path(as_path: tuple, as4_path: tuple) -> tuple:
    """Reconstruct the 4-byte path from AS_PATH and AS4_PATH (RFC 6793 4.2.3)."""
    n_old, n_new = _path_count(as_path), _path_count(as4_path)
    if n_old < n_new:
        return as_path
    keep = n_old - n_new
    head = []
    for seg in as_path:
        if keep <= 0:
            break
        if seg.kind is SegmentKind.SET:
            head.append(seg)
            keep -= 1
        else:
            take = seg.asns[:keep]
            head.append(PathSegment(SegmentKind.SEQUENCE, take))
            keep -= len(take)
    merged = []
    for seg in head + list(as4_path):
        if (merged and seg.kind is SegmentKind.SEQUENCE
                and merged[-1].kind is SegmentKind.SEQUENCE):
            merged[-1] = PathSegment(SegmentKind.SEQUENCE, merged[-1].asns + seg.asns)
        else:
            merged.append(seg)
    return tuple(merged)


def decode_mrt(source, collector: str = "", strict: bool = False):
    """Decode a whole MRT stream. Returns ``(records, stats)``."""
    reader = MrtReader(source, collector=collector, strict=strict)
    records = list(reader)
    return records, reader.stats
