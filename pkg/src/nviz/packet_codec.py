"""Binary packet encoding and decoding.

Every packet starts with a big-endian unsigned packet ID of
``packet_id_length`` bytes, followed by each field's raw value as a
big-endian unsigned integer of its property's byte length.  A packet
must match its declared length exactly and every field must sit inside
its property's [min, max] raw range; anything else is a bad packet and
is reported as a :class:`DecodeError` without touching any state.

The pipe-separated hex string used in checkpoint logs and packet-log
files ("0|2|0|3|1|6F|0|7B|") is handled here too: one token per byte,
upper-case, no leading zeros, trailing pipe.
"""

from __future__ import annotations

from dataclasses import dataclass

from .spec_manager import Field, NetworkSpec, PacketFormat, PacketSpec


@dataclass(frozen=True)
class RawPacket:
    data: bytes
    received_at: int  # epoch milliseconds


@dataclass(frozen=True)
class ParsedPacket:
    packet_id: int
    format: PacketFormat
    values: tuple[tuple[Field, int], ...]
    received_at: int


class DecodeError(Exception):
    pass


class TooShort(DecodeError):
    def __init__(self, length: int, needed: int):
        super().__init__(f"packet of {length} byte(s) shorter than the "
                         f"{needed}-byte packet ID")


class UnknownPacketType(DecodeError):
    def __init__(self, packet_id: int):
        super().__init__(f"unknown packet type {packet_id}")
        self.packet_id = packet_id


class LengthMismatch(DecodeError):
    def __init__(self, expected: int, actual: int):
        super().__init__(f"expected {expected} bytes, got {actual}")
        self.expected = expected
        self.actual = actual


class RangeViolation(DecodeError):
    def __init__(self, field: Field, value: int, lo: int, hi: int):
        super().__init__(f"field {field.name!r} value {value} outside "
                         f"[{lo}, {hi}]")
        self.field = field
        self.value = value
        self.min = lo
        self.max = hi


class EncodeError(Exception):
    pass


class HexLogError(Exception):
    pass


def decode_packet(raw: RawPacket, net: NetworkSpec, pkts: PacketSpec) -> ParsedPacket:
    data = raw.data
    idlen = pkts.packet_id_length
    if len(data) < idlen:
        raise TooShort(len(data), idlen)
    packet_id = int.from_bytes(data[:idlen], "big")
    fmt = pkts.lookup(packet_id)
    if fmt is None:
        raise UnknownPacketType(packet_id)
    if len(data) != fmt.total_length:
        raise LengthMismatch(fmt.total_length, len(data))
    values = []
    offset = idlen
    for fld, prop in zip(fmt.fields, fmt.resolved):
        value = int.from_bytes(data[offset:offset + prop.length], "big")
        offset += prop.length
        if not prop.min <= value <= prop.max:
            raise RangeViolation(fld, value, prop.min, prop.max)
        values.append((fld, value))
    return ParsedPacket(packet_id=packet_id, format=fmt,
                        values=tuple(values), received_at=raw.received_at)


def encode_packet(p: ParsedPacket, pkts: PacketSpec, net: NetworkSpec) -> bytes:
    """Inverse of decode: decode_packet(encode_packet(p)) == p."""
    out = bytearray(p.packet_id.to_bytes(pkts.packet_id_length, "big"))
    for (fld, value), prop in zip(p.values, p.format.resolved):
        if value < 0 or value > prop.capacity:
            raise EncodeError(f"field {fld.name!r} value {value} does not "
                              f"fit in {prop.length} byte(s)")
        out += value.to_bytes(prop.length, "big")
    return bytes(out)


def parse_hex_log(text: str) -> bytes:
    """Parse a pipe-separated hex byte string like ``0|2|6F|``."""
    if text and not text.endswith("|"):
        raise HexLogError("missing trailing '|'")
    out = bytearray()
    for token in text.split("|")[:-1]:
        if not token:
            raise HexLogError("empty byte token")
        if len(token) > 2:
            raise HexLogError(f"byte token {token!r} longer than two hex digits")
        if not all(c in "0123456789abcdefABCDEF" for c in token):
            raise HexLogError(f"non-hex byte token {token!r}")
        out.append(int(token, 16))
    return bytes(out)


def format_hex_log(data: bytes) -> str:
    """Format bytes as upper-case hex tokens without leading zeros."""
    return "".join(f"{b:X}|" for b in data)
