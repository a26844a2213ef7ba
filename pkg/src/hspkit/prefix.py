"""Prefix values, the hyper-specific predicate and a binary prefix trie."""

from __future__ import annotations

import ipaddress
from dataclasses import dataclass
from typing import Iterable, Iterator

__all__ = [
    "Prefix",
    "PrefixError",
    "PrefixTrie",
    "parse_prefix",
    "canonicalize",
    "is_hyper_specific",
    "is_more_specific_of",
    "anchor_of",
    "ANCHOR_LENGTH",
    "MAX_LENGTH",
]

MAX_LENGTH = {4: 32, 6: 128}
# /24 and /48 are the widely accepted boundaries; anything longer is hyper-specific
ANCHOR_LENGTH = {4: 24, 6: 48}


class PrefixError(ValueError):
    pass


@dataclass(frozen=True, order=True, slots=True)
class Prefix:
    """An IP prefix in canonical form (no bits set beyond ``length``).

    Ordering is by family, then address, then length, so a covering prefix
    sorts before the prefixes it covers when they share a network address.
    """

    family: int
    bits: int
    length: int

    def __post_init__(self):
        if self.family not in MAX_LENGTH:
            raise PrefixError(f"unknown address family {self.family!r}")
        width = MAX_LENGTH[self.family]
        if not 0 <= self.length <= width:
            raise PrefixError(f"length /{self.length} out of range for IPv{self.family}")
        if not 0 <= self.bits < (1 << width):
            raise PrefixError("address out of range")
        if self.bits & _host_mask(self.family, self.length):
            raise PrefixError(f"host bits set in {self._text()}")

    @property
    def width(self) -> int:
        return MAX_LENGTH[self.family]

    @property
    def address(self) -> str:
        if self.family == 4:
            return str(ipaddress.IPv4Address(self.bits))
        return str(ipaddress.IPv6Address(self.bits))

    def _text(self) -> str:
        return f"{self.address}/{self.length}"

    def __str__(self) -> str:
        return self._text()

    def __repr__(self) -> str:
        return f"Prefix({self._text()!r})"

    def contains(self, other: "Prefix") -> bool:
        """True if ``other`` lies inside this prefix (equality included)."""
        if other.family != self.family or other.length < self.length:
            return False
        shift = self.width - self.length
        return (other.bits >> shift) == (self.bits >> shift)

    def truncate(self, length: int) -> "Prefix":
        """The covering prefix of the given (shorter or equal) length."""
        if length > self.length:
            raise PrefixError(f"cannot truncate /{self.length} to longer /{length}")
        return Prefix(self.family, self.bits & ~_host_mask(self.family, length), length)

    def bit(self, index: int) -> int:
        return (self.bits >> (self.width - 1 - index)) & 1


def _host_mask(family: int, length: int) -> int:
    width = MAX_LENGTH[family]
    return (1 << (width - length)) - 1


def canonicalize(family: int, bits: int, length: int) -> tuple[Prefix, bool]:
    """Build a prefix, clearing host bits. Returns ``(prefix, was_canonical)``."""
    cleared = bits & ~_host_mask(family, length)
    return Prefix(family, cleared, length), cleared == bits


def parse_prefix(text: str) -> Prefix:
    """Parse ``addr/len`` CIDR notation; host bits must be zero."""
    if not isinstance(text, str) or "/" not in text:
        raise PrefixError(f"not CIDR notation: {text!r}")
    addr_text, _, len_text = text.strip().partition("/")
    if not len_text.isdigit():
        raise PrefixError(f"bad prefix length in {text!r}")
    length = int(len_text)
    try:
        addr = ipaddress.ip_address(addr_text)
    except ValueError as exc:
        raise PrefixError(str(exc)) from None
    family = addr.version
    if length > MAX_LENGTH[family]:
        raise PrefixError(f"length /{length} out of range for IPv{family}")
    return Prefix(family, int(addr), length)


def is_hyper_specific(p: Prefix) -> bool:
    return p.length > ANCHOR_LENGTH[p.family]


def is_more_specific_of(p: Prefix, q: Prefix) -> bool:
    """True iff ``p`` is strictly contained in ``q``."""
    if p.family != q.family:
        raise PrefixError("address family mismatch")
    return q.length < p.length and q.contains(p)


def anchor_of(p: Prefix) -> Prefix:
    """The covering /24 (IPv4) or /48 (IPv6) of a hyper-specific prefix."""
    if not is_hyper_specific(p):
        raise PrefixError(f"{p} is not hyper-specific")
    return p.truncate(ANCHOR_LENGTH[p.family])


class _Node:
    __slots__ = ("children", "prefix", "payloads")

    def __init__(self):
        self.children = [None, None]
        self.prefix = None
        self.payloads = None


class PrefixTrie:
    """Binary (one bit per edge) trie keyed by prefix, one tree per family.

    Each inserted prefix carries a set of payloads. Built by one writer;
    queries do not mutate the tree.
    """

    def __init__(self, items: Iterable = ()):
        self._roots = {4: _Node(), 6: _Node()}
        self._size = 0
        for item in items:
            if isinstance(item, Prefix):
                self.insert(item)
            else:
                self.insert(*item)

    def __len__(self) -> int:
        return self._size

    def __contains__(self, p: Prefix) -> bool:
        node = self._find(p)
        return node is not None and node.prefix is not None

    def _find(self, p: Prefix):
        node = self._roots[p.family]
        width = p.width
        bits = p.bits
        for i in range(p.length):
            node = node.children[(bits >> (width - 1 - i)) & 1]
            if node is None:
                return None
        return node

    def insert(self, p: Prefix, payload=None) -> None:
        node = self._roots[p.family]
        width = p.width
        bits = p.bits
        for i in range(p.length):
            b = (bits >> (width - 1 - i)) & 1
            child = node.children[b]
            if child is None:
                child = node.children[b] = _Node()
            node = child
        if node.prefix is None:
            node.prefix = p
            node.payloads = set()
            self._size += 1
        if payload is not None:
            node.payloads.add(payload)

    def get(self, p: Prefix, default=None):
        node = self._find(p)
        if node is None or node.prefix is None:
            return default
        return frozenset(node.payloads)

    def covering(self, p: Prefix) -> list[tuple[Prefix, frozenset]]:
        """Inserted prefixes equal to or covering ``p``, most specific first."""
        found = []
        node = self._roots[p.family]
        width = p.width
        bits = p.bits
        depth = 0
        while node is not None:
            if node.prefix is not None:
                found.append((node.prefix, frozenset(node.payloads)))
            if depth == p.length:
                break
            node = node.children[(bits >> (width - 1 - depth)) & 1]
            depth += 1
        found.reverse()
        return found

    def longest_match(self, p: Prefix):
        """Most specific inserted prefix covering ``p``, or None."""
        node = self._roots[p.family]
        width = p.width
        bits = p.bits
        best = None
        depth = 0
        while node is not None:
            if node.prefix is not None:
                best = node.prefix
            if depth == p.length:
                break
            node = node.children[(bits >> (width - 1 - depth)) & 1]
            depth += 1
        return best

    def covers(self, p: Prefix) -> bool:
        return self.longest_match(p) is not None

    def covered(self, p: Prefix) -> list[tuple[Prefix, frozenset]]:
        """Inserted prefixes inside ``p`` (``p`` itself included), sorted."""
        node = self._find(p)
        if node is None:
            return []
        found = [(n.prefix, frozenset(n.payloads)) for n in _walk(node)]
        found.sort(key=lambda item: item[0])
        return found

    def __iter__(self) -> Iterator[Prefix]:
        for family in (4, 6):
            for node in _walk(self._roots[family]):
                yield node.prefix

    def items(self) -> Iterator[tuple[Prefix, frozenset]]:
        for family in (4, 6):
            for node in _walk(self._roots[family]):
                yield node.prefix, frozenset(node.payloads)


def _walk(root: _Node) -> Iterator[_Node]:
    # pre-order, 0-branch first: yields prefixes in sorted order
    stack = [root]
    while stack:
        node = stack.pop()
        if node.prefix is not None:
            yield node
        for child in (node.children[1], node.children[0]):
            if child is not None:
                stack.append(child)
