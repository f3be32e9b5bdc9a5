"""Packet sources: log files, the deterministic simulator, TCP frames.

A packet source is an iterable of ``(epoch_ms, frame_bytes)`` tuples
with non-decreasing timestamps.  Sources are consumed by exactly one
ingest pipeline; the TCP source observes cancellation within 100 ms.

The packet-log-file format is one packet per line::

    <epoch_ms> <pipe-hex-string>

e.g. ``1328163457311 0|2|0|3|1|6F|0|7B|`` -- the same timestamp and hex
encodings the checkpoint dialect uses, so checkpoint logs and input
files convert into each other losslessly.
"""

from __future__ import annotations

import logging
import random
import socket
import threading
import time
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Iterator

from .packet_codec import (
    HexLogError,
    ParsedPacket,
    encode_packet,
    format_hex_log,
    parse_hex_log,
)
from .spec_manager import NetworkSpec, PacketSpec

logger = logging.getLogger(__name__)

PacketEvent = tuple[int, bytes]


class SourceError(Exception):
    pass


def parse_log_line(line: str) -> PacketEvent:
    """Parse one packet-log-file line; raises SourceError if malformed."""
    parts = line.split(" ")
    if len(parts) != 2:
        raise SourceError(f"expected '<epoch_ms> <hex>', got {line!r}")
    stamp, hex_text = parts
    try:
        t = int(stamp, 10)
    except ValueError:
        raise SourceError(f"bad timestamp {stamp!r}") from None
    if t < 0:
        raise SourceError(f"negative timestamp {stamp!r}")
    try:
        data = parse_hex_log(hex_text)
    except HexLogError as err:
        raise SourceError(str(err)) from None
    if not data:
        raise SourceError("empty packet")
    return t, data


def format_log_line(t: int, data: bytes) -> str:
    return f"{t} {format_hex_log(data)}"


def write_log_file(path: str | Path, events: Iterable[PacketEvent]) -> int:
    """Export any source to a packet-log file; returns the line count."""
    count = 0
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for t, data in events:
            fh.write(format_log_line(t, data) + "\n")
            count += 1
    return count


class FileSource:
    """Reads a packet-log file in order, skipping malformed lines."""

    def __init__(self, path: str | Path):
        self.path = Path(path)
        if not self.path.exists():
            raise SourceError(f"no such file: {self.path}")
        self.skipped: list[tuple[int, str]] = []

    def __iter__(self) -> Iterator[PacketEvent]:
        last_t = -1
        with open(self.path, "r", encoding="utf-8") as fh:
            for lineno, line in enumerate(fh, start=1):
                line = line.rstrip("\n")
                if not line.strip():
                    continue
                try:
                    t, data = parse_log_line(line)
                except SourceError as err:
                    self.skipped.append((lineno, str(err)))
                    logger.warning("%s:%d: %s (line skipped)",
                                   self.path, lineno, err)
                    continue
                if t < last_t:
                    self.skipped.append((lineno, "timestamp goes backwards"))
                    logger.warning("%s:%d: timestamp goes backwards (line skipped)",
                                   self.path, lineno)
                    continue
                last_t = t
                yield t, data


def file_source(path: str | Path) -> FileSource:
    return FileSource(path)


@dataclass(frozen=True)
class SimConfig:
    seed: int
    rate: float = 10.0  # packets per second of simulated time
    count: int = 100
    packet_mix: dict[int, float] | None = None
    start_t: int = 1_000_000_000_000  # epoch ms of the first packet


def simulator_source(cfg: SimConfig, net: NetworkSpec,
                     pkts: PacketSpec) -> Iterator[PacketEvent]:
    """Deterministic stream of valid packets.

    Packet types are drawn by ``packet_mix`` weight (uniform by default)
    and every field uniformly within its property's [min, max], so each
    emitted packet decodes and range-validates by construction.
    """
    if cfg.rate <= 0:
        raise SourceError("rate must be positive")
    formats = sorted(pkts.packets, key=lambda f: f.packet_id)
    if not formats:
        raise SourceError("packet spec defines no packet types")
    if cfg.packet_mix is not None:
        unknown = set(cfg.packet_mix) - {f.packet_id for f in formats}
        if unknown:
            raise SourceError(f"packet_mix references unknown packet ids {sorted(unknown)}")
        weights = [cfg.packet_mix.get(f.packet_id, 0.0) for f in formats]
        if any(w < 0 for w in weights) or not any(w > 0 for w in weights):
            raise SourceError("packet_mix weights must be non-negative, not all zero")
    else:
        weights = [1.0] * len(formats)

    rng = random.Random(cfg.seed)
    for i in range(cfg.count):
        t = cfg.start_t + round(i * 1000.0 / cfg.rate)
        fmt = rng.choices(formats, weights=weights)[0]
        values = tuple(
            (fld, rng.randint(prop.min, prop.max))
            for fld, prop in zip(fmt.fields, fmt.resolved)
        )
        packet = ParsedPacket(packet_id=fmt.packet_id, format=fmt,
                              values=values, received_at=t)
        yield t, encode_packet(packet, pkts, net)


class TcpSource:
    """Listens on (host, port) and yields length-prefixed frames.

    Frames are 2-byte big-endian length + payload.  Arrival wall-clock
    time (epoch ms) is the packet timestamp.  ``close()`` stops the
    source; iteration notices within 100 ms.
    """

    _POLL_S = 0.05

    def __init__(self, host: str, port: int):
        self._server = socket.socket(socket.AF_INET, socket.SOCK_STREAM)
        self._server.setsockopt(socket.SOL_SOCKET, socket.SO_REUSEADDR, 1)
        self._server.bind((host, port))
        self._server.listen(1)
        self._server.settimeout(self._POLL_S)
        self._stop = threading.Event()

    @property
    def address(self) -> tuple[str, int]:
        return self._server.getsockname()[:2]

    def close(self) -> None:
        self._stop.set()

    def __iter__(self) -> Iterator[PacketEvent]:
        try:
            conn = self._accept()
            if conn is None:
                return
            with conn:
                conn.settimeout(self._POLL_S)
                last_t = 0
                while not self._stop.is_set():
                    frame = self._read_frame(conn)
                    if frame is None:
                        return
                    t = max(int(time.time() * 1000), last_t)
                    last_t = t
                    yield t, frame
        finally:
            self._server.close()

    def _accept(self) -> socket.socket | None:
        while not self._stop.is_set():
            try:
                conn, _ = self._server.accept()
                return conn
            except socket.timeout:
                continue
        return None

    def _read_exact(self, conn: socket.socket, n: int) -> bytes | None:
        buf = b""
        while len(buf) < n:
            if self._stop.is_set():
                return None
            try:
                chunk = conn.recv(n - len(buf))
            except socket.timeout:
                continue
            if not chunk:  # peer closed
                return None
            buf += chunk
        return buf

    def _read_frame(self, conn: socket.socket) -> bytes | None:
        header = self._read_exact(conn, 2)
        if header is None:
            return None
        length = int.from_bytes(header, "big")
        if length == 0:
            return b""
        return self._read_exact(conn, length)


def parse_source_descriptor(desc: str, net: NetworkSpec, pkts: PacketSpec):
    """Build a source from ``file:PATH``, ``sim:...`` or ``tcp:HOST:PORT``.

    The sim descriptor takes comma-separated key=value pairs, e.g.
    ``sim:seed=7,rate=10,count=1000,mix=1:1;2:3``.
    """
    scheme, _, rest = desc.partition(":")
    if scheme == "file":
        return file_source(rest)
    if scheme == "tcp":
        host, _, port = rest.rpartition(":")
        if not host or not port.isdigit():
            raise SourceError(f"bad tcp descriptor {desc!r}, want tcp:HOST:PORT")
        return TcpSource(host, int(port))
    if scheme == "sim":
        kwargs: dict = {"seed": 0}
        for pair in filter(None, rest.split(",")):
            key, _, value = pair.partition("=")
            try:
                if key == "seed":
                    kwargs["seed"] = int(value)
                elif key == "rate":
                    kwargs["rate"] = float(value)
                elif key == "count":
                    kwargs["count"] = int(value)
                elif key == "start":
                    kwargs["start_t"] = int(value)
                elif key == "mix":
                    kwargs["packet_mix"] = {
                        int(p.split(":")[0]): float(p.split(":")[1])
                        for p in value.split(";")
                    }
                else:
                    raise SourceError(f"unknown sim option {key!r}")
            except (ValueError, IndexError):
                raise SourceError(f"bad sim option {pair!r}") from None
        return simulator_source(SimConfig(**kwargs), net, pkts)
    raise SourceError(f"unknown source scheme {scheme!r} (use file:, sim: or tcp:)")
