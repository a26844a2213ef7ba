"""Reference MRT writer.

Deliberately independent of :mod:`hspkit.mrt` (no shared helpers) so that a
write/read round trip checks the reader against a second reading of RFC 6396
and RFC 4271. Used to build test fixtures and synthetic collector archives.
"""

from __future__ import annotations

import ipaddress
from typing import Iterable, Sequence

from .mrt import RecordKind, RouteRecord, SegmentKind

__all__ = ["MrtWriter", "encode_rib_dump", "encode_updates"]


def _u8(v):
    return bytes([v])


def _u16(v):
    return v.to_bytes(2, "big")


def _u32(v):
    return v.to_bytes(4, "big")


def _addr(text):
    return ipaddress.ip_address(text).packed


def _nlri(prefix, declared=None):
    length = prefix.length if declared is None else declared
    width = 32 if prefix.family == 4 else 128
    full = prefix.bits.to_bytes(width // 8, "big")
    nbytes = -(-length // 8)
    body = full[:nbytes] + bytes(max(0, nbytes - len(full)))
    return _u8(length) + body


def _attribute(flags, code, value):
    if len(value) > 255:
        return _u8(flags | 0x10) + _u8(code) + _u16(len(value)) + value
    return _u8(flags) + _u8(code) + _u8(len(value)) + value


def _as_path_value(path, four_byte):
    out = b""
    for seg in path:
        stype = 2 if seg.kind is SegmentKind.SEQUENCE else 1
        asns = list(seg.asns)
        if not four_byte:
            asns = [a if a < 65536 else 23456 for a in asns]
        # a segment holds at most 255 ASNs
        for i in range(0, len(asns), 255):
            chunk = asns[i:i + 255]
            out += _u8(stype) + _u8(len(chunk))
            for a in chunk:
                out += _u32(a) if four_byte else _u16(a)
    return out


def _needs_as4(rec):
    if any(a > 65535 for seg in rec.as_path for a in seg.asns):
        return True
    return rec.aggregator is not None and rec.aggregator[0] > 65535


def _path_attributes(rec, four_byte, mp_reach=None):
    attrs = _attribute(0x40, 1, b"\x00")  # ORIGIN IGP
    attrs += _attribute(0x40, 2, _as_path_value(rec.as_path, four_byte))
    if mp_reach is None and rec.prefix.family == 4:
        attrs += _attribute(0x40, 3, _addr("192.0.2.1"))
    if rec.atomic_aggregate:
        attrs += _attribute(0x40, 6, b"")
    if rec.aggregator is not None:
        asn, ip = rec.aggregator
        if four_byte:
            attrs += _attribute(0xC0, 7, _u32(asn) + _addr(ip))
        else:
            attrs += _attribute(0xC0, 7, _u16(asn if asn < 65536 else 23456) + _addr(ip))
    if rec.communities:
        attrs += _attribute(0xC0, 8, b"".join(_u16(a) + _u16(b) for a, b in rec.communities))
    if mp_reach is not None:
        attrs += _attribute(0x80, 14, mp_reach)
    if rec.extended_communities:
        attrs += _attribute(0xC0, 16, b"".join(v.to_bytes(8, "big") for v in rec.extended_communities))
    if not four_byte and _needs_as4(rec):
        attrs += _attribute(0xC0, 17, _as_path_value(rec.as_path, True))
        if rec.aggregator is not None and rec.aggregator[0] > 65535:
            asn, ip = rec.aggregator
            attrs += _attribute(0xC0, 18, _u32(asn) + _addr(ip))
    if rec.large_communities:
        attrs += _attribute(0xC0, 32, b"".join(_u32(a) + _u32(b) + _u32(c)
                                                for a, b, c in rec.large_communities))
    return attrs


def _mrt(ts, mtype, subtype, body, usec=None):
    if usec is not None:
        body = _u32(usec) + body
    return _u32(ts) + _u16(mtype) + _u16(subtype) + _u32(len(body)) + body


class MrtWriter:
    """Accumulates MRT messages into a byte string."""

    def __init__(self):
        self.chunks = []

    def getvalue(self) -> bytes:
        return b"".join(self.chunks)

    def raw(self, ts, mtype, subtype, body):
        self.chunks.append(_mrt(ts, mtype, subtype, body))

    def rib_dump(self, records: Sequence[RouteRecord], ts: int, collector_id="192.0.2.254",
                 view=""):
        peers = []
        for rec in records:
            if rec.feeder not in peers:
                peers.append(rec.feeder)
        body = _addr(collector_id) + _u16(len(view)) + view.encode() + _u16(len(peers))
        for asn, ip in peers:
            v6 = ":" in ip
            ptype = (1 if v6 else 0) | 2
            body += _u8(ptype) + _addr("10.0.0.1") + _addr(ip) + _u32(asn)
        self.raw(ts, 13, 1, body)

        groups = {}
        for rec in records:
            groups.setdefault((rec.prefix, rec.raw_length), []).append(rec)
        for seq, ((prefix, declared), recs) in enumerate(groups.items()):
            subtype = 2 if prefix.family == 4 else 4
            body = _u32(seq) + _nlri(prefix, declared) + _u16(len(recs))
            for rec in recs:
                mp = None
                if prefix.family == 6:
                    nh = _addr("2001:db8::1")
                    mp = _u8(len(nh)) + nh  # abbreviated form used in RIB entries
                attrs = _path_attributes(rec, True, mp_reach=mp)
                body += _u16(peers.index(rec.feeder)) + _u32(ts) + _u16(len(attrs)) + attrs
            self.raw(ts, 13, subtype, body)

    def update(self, announced: Sequence[RouteRecord] = (), withdrawn: Sequence[RouteRecord] = (),
               as4=True, extended=False, ts=None):
        """One BGP UPDATE. Announced records must share peer and attributes."""
        ref = (list(announced) + list(withdrawn))[0]
        if ts is None:
            ts = ref.timestamp
        sec = int(ts)
        usec = round((ts - sec) * 1e6) if extended else None
        v6 = ":" in ref.peer_address
        afi = 2 if v6 else 1

        w4 = b"".join(_nlri(r.prefix, r.raw_length) for r in withdrawn if r.prefix.family == 4)
        w6 = b"".join(_nlri(r.prefix, r.raw_length) for r in withdrawn if r.prefix.family == 6)
        a4 = b"".join(_nlri(r.prefix, r.raw_length) for r in announced if r.prefix.family == 4)
        a6 = b"".join(_nlri(r.prefix, r.raw_length) for r in announced if r.prefix.family == 6)

        attrs = b""
        if w6:
            attrs += _attribute(0x80, 15, _u16(2) + _u8(1) + w6)
        if announced:
            mp = None
            if a6:
                nh = _addr("2001:db8::1")
                mp = _u16(2) + _u8(1) + _u8(len(nh)) + nh + _u8(0) + a6
            attrs = _path_attributes(announced[0], as4, mp_reach=mp) + attrs
        payload = _u16(len(w4)) + w4 + _u16(len(attrs)) + attrs + a4
        msg = b"\xff" * 16 + _u16(19 + len(payload)) + _u8(2) + payload

        local = "::1" if v6 else "127.0.0.1"
        if as4:
            head = _u32(ref.peer_asn) + _u32(64511) + _u16(0) + _u16(afi)
            subtype = 4
        else:
            head = _u16(ref.peer_asn) + _u16(64511) + _u16(0) + _u16(afi)
            subtype = 1
        body = head + _addr(ref.peer_address) + _addr(local) + msg
        self.chunks.append(_mrt(sec, 17 if extended else 16, subtype, body, usec))

    def state_change(self, ts, peer_asn, peer_address, old=6, new=1):
        afi = 2 if ":" in peer_address else 1
        local = "::1" if afi == 2 else "127.0.0.1"
        body = (_u32(peer_asn) + _u32(64511) + _u16(0) + _u16(afi) + _addr(peer_address)
                + _addr(local) + _u16(old) + _u16(new))
        self.raw(ts, 16, 5, body)


def encode_rib_dump(records: Iterable[RouteRecord], ts: int, **kw) -> bytes:
    w = MrtWriter()
    w.rib_dump(list(records), ts, **kw)
    return w.getvalue()


def encode_updates(records: Iterable[RouteRecord], as4=True, extended=False) -> bytes:
    """One UPDATE message per record, in input order."""
    w = MrtWriter()
    for rec in records:
        if rec.kind is RecordKind.WITHDRAWAL:
            w.update(withdrawn=[rec], as4=as4, extended=extended)
        else:
            w.update(announced=[rec], as4=as4, extended=extended)
    return w.getvalue()
