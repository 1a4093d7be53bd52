"""Hierarchical content names, path tags, and the three wire packet types.

Everything here is an immutable value type; packets are copied (never
mutated) as they move between nodes, so they can be shared freely.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from enum import Enum
from typing import Optional, Tuple, Union


class MalformedNameError(ValueError):
    """Raised for names that cannot carry flow traffic."""


class EmptyTagError(IndexError):
    """Popping an empty tag; the caller treats this as 'last specified hop'."""


Components = Tuple[str, ...]


def _validate_components(components: Components, minimum: int) -> None:
    if len(components) < minimum:
        raise MalformedNameError(
            f"need at least {minimum} components, got {list(components)!r}")
    for comp in components:
        if not comp:
            raise MalformedNameError("empty name component")
        if "/" in comp:
            raise MalformedNameError(f"component contains '/': {comp!r}")


def _parse_text(text: str) -> Components:
    if not text.startswith("/"):
        raise MalformedNameError(f"name must start with '/': {text!r}")
    parts = tuple(p for p in text.split("/") if p != "")
    if not parts:
        raise MalformedNameError("empty name")
    return parts


@dataclass(frozen=True)
class FlowName:
    """Shared prefix of all packets of one content object."""

    components: Components

    def __post_init__(self) -> None:
        _validate_components(self.components, minimum=1)

    @classmethod
    def parse(cls, text: str) -> "FlowName":
        return cls(_parse_text(text))

    def text(self) -> str:
        return "/" + "/".join(self.components)

    def with_sequence(self, seq: int) -> "ContentName":
        """Packet name for sequence number `seq` of this flow."""
        if seq < 0:
            raise MalformedNameError(f"negative sequence number {seq}")
        return ContentName(self.components + (str(seq),))

    def __len__(self) -> int:
        return len(self.components)

    def __str__(self) -> str:
        return self.text()


@dataclass(frozen=True)
class ContentName:
    """Full packet name: flow prefix plus one trailing sequence component."""

    components: Components

    def __post_init__(self) -> None:
        _validate_components(self.components, minimum=2)

    @classmethod
    def parse(cls, text: str) -> "ContentName":
        return cls(_parse_text(text))

    def text(self) -> str:
        return "/" + "/".join(self.components)

    def flow(self) -> FlowName:
        return FlowName(self.components[:-1])

    def sequence(self) -> int:
        last = self.components[-1]
        if not last.isdigit():
            raise MalformedNameError(f"non-decimal sequence component {last!r}")
        return int(last)

    def __str__(self) -> str:
        return self.text()


def flow_name_of(name: ContentName) -> FlowName:
    """Drop the sequence postfix: /UCLA/video/p1/17 -> /UCLA/video/p1."""
    if len(name.components) < 2:
        raise MalformedNameError("single-component name has no flow prefix")
    return name.flow()


@dataclass(frozen=True)
class Tag:
    """Stack of interface identifiers describing one transmission path.

    Routers push the receiving interface while a probe reply travels to the
    consumer, and pop one identifier per hop when the consumer replays the
    tag on an Interest. Top of stack = last pushed = `stack[-1]`.
    """

    stack: Tuple[int, ...] = ()

    def push(self, iface: int) -> "Tag":
        return Tag(self.stack + (iface,))

    def pop(self) -> Tuple[int, "Tag"]:
        if not self.stack:
            raise EmptyTagError("pop on empty tag")
        return self.stack[-1], Tag(self.stack[:-1])

    def __len__(self) -> int:
        return len(self.stack)

    def __bool__(self) -> bool:
        return bool(self.stack)


EMPTY_TAG = Tag()


class NackReason(Enum):
    PATH_FAILURE = 1
    NO_ROUTE = 2


@dataclass(frozen=True)
class Interest:
    """Request packet. tag=None means legacy name-routed; an empty tag plus
    probe=True is a path probe; a non-empty tag pins the forwarding path."""

    name: ContentName
    tag: Optional[Tag] = None
    probe: bool = False
    hop_budget: int = 32

    def __post_init__(self) -> None:
        if self.probe and (self.tag is None or len(self.tag) > 0):
            raise ValueError("probe Interests carry a present-and-empty tag")


@dataclass(frozen=True)
class Data:
    """Content packet. Probe replies carry the collecting tag; the 1-bit
    from_intermediate flag marks cache/aggregation origin."""

    name: ContentName
    tag: Optional[Tag] = None
    from_intermediate: bool = False
    payload_size: int = 1024


@dataclass(frozen=True)
class Nack:
    name: ContentName
    reason: NackReason


Packet = Union[Interest, Data, Nack]

# Fixed header model used by the link serialization maths. Only payloads are
# modelled by the protocol; header sizes are simulator constants so that
# utilization arithmetic is reproducible.
INTEREST_HEADER_BYTES = 60
DATA_HEADER_BYTES = 60
NACK_BYTES = 60
TAG_ITEM_BYTES = 4


def wire_size(pkt: Packet) -> int:
    """Bytes the packet occupies on a link."""
    if isinstance(pkt, Interest):
        tag_items = len(pkt.tag) if pkt.tag is not None else 0
        return INTEREST_HEADER_BYTES + TAG_ITEM_BYTES * tag_items
    if isinstance(pkt, Data):
        tag_items = len(pkt.tag) if pkt.tag is not None else 0
        return DATA_HEADER_BYTES + TAG_ITEM_BYTES * tag_items + pkt.payload_size
    if isinstance(pkt, Nack):
        return NACK_BYTES
    raise TypeError(f"not a packet: {pkt!r}")


# --- wire codec -----------------------------------------------------------
#
# Length-prefixed binary form: 1 type byte, the name as a component list,
# an optional tag as a list of fixed-width u32 interface ids, then the
# per-type fields. Used by tests and by anyone persisting packets; the
# simulator itself moves packet objects around.

_T_INTEREST, _T_DATA, _T_NACK = 1, 2, 3


def _encode_name(components: Components) -> bytes:
    out = [struct.pack("!B", len(components))]
    for comp in components:
        raw = comp.encode("utf-8")
        out.append(struct.pack("!H", len(raw)))
        out.append(raw)
    return b"".join(out)


def _decode_name(buf: bytes, off: int) -> Tuple[Components, int]:
    (count,) = struct.unpack_from("!B", buf, off)
    off += 1
    comps = []
    for _ in range(count):
        (ln,) = struct.unpack_from("!H", buf, off)
        off += 2
        comps.append(buf[off:off + ln].decode("utf-8"))
        off += ln
    return tuple(comps), off


def _encode_tag(tag: Optional[Tag]) -> bytes:
    if tag is None:
        return struct.pack("!B", 0)
    return struct.pack("!BH", 1, len(tag.stack)) + b"".join(
        struct.pack("!I", iface) for iface in tag.stack)


def _decode_tag(buf: bytes, off: int) -> Tuple[Optional[Tag], int]:
    (present,) = struct.unpack_from("!B", buf, off)
    off += 1
    if not present:
        return None, off
    (count,) = struct.unpack_from("!H", buf, off)
    off += 2
    stack = struct.unpack_from(f"!{count}I", buf, off) if count else ()
    return Tag(tuple(stack)), off + 4 * count


def encode_packet(pkt: Packet) -> bytes:
    if isinstance(pkt, Interest):
        return (struct.pack("!B", _T_INTEREST) + _encode_name(pkt.name.components)
                + _encode_tag(pkt.tag) + struct.pack("!BH", int(pkt.probe), pkt.hop_budget))
    if isinstance(pkt, Data):
        return (struct.pack("!B", _T_DATA) + _encode_name(pkt.name.components)
                + _encode_tag(pkt.tag)
                + struct.pack("!BI", int(pkt.from_intermediate), pkt.payload_size))
    if isinstance(pkt, Nack):
        return (struct.pack("!B", _T_NACK) + _encode_name(pkt.name.components)
                + struct.pack("!B", pkt.reason.value))
    raise TypeError(f"not a packet: {pkt!r}")


def decode_packet(buf: bytes) -> Packet:
    (kind,) = struct.unpack_from("!B", buf, 0)
    comps, off = _decode_name(buf, 1)
    name = ContentName(comps)
    if kind == _T_INTEREST:
        tag, off = _decode_tag(buf, off)
        probe, hop_budget = struct.unpack_from("!BH", buf, off)
        return Interest(name, tag, bool(probe), hop_budget)
    if kind == _T_DATA:
        tag, off = _decode_tag(buf, off)
        from_intermediate, payload_size = struct.unpack_from("!BI", buf, off)
        return Data(name, tag, bool(from_intermediate), payload_size)
    if kind == _T_NACK:
        (reason,) = struct.unpack_from("!B", buf, off)
        return Nack(name, NackReason(reason))
    raise ValueError(f"unknown packet type byte {kind}")
