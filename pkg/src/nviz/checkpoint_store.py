"""Checkpoint log: accumulate packet logs, seal and persist snapshots.

Every valid packet is journaled; after ``LogPerCheckpoint`` logs the
store seals a checkpoint carrying the network state *after* the last
log and the logs accumulated since the previous checkpoint.  Replaying
a checkpoint's logs onto its predecessor's state reproduces its state
exactly -- that identity is what makes arbitrary-time reconstruction
work.

On disk a store directory holds one ``cp_<t>.xml`` per checkpoint
(written atomically via rename), a ``pending.log`` journal in the
packet-log-file format so unsealed logs survive restarts, and copies of
the two spec files (``net.xml``, ``pkt.xml``) so replays always use the
specs the data was recorded under.

Checkpoint XML::

    <Checkpoint t="1328163686181">
      <Node addr="0" att1="1.0" att2="102.0" att3="378.0">
        <Link att1="123.0" dest="1"/>
      </Node>
      <Envr att1="11.0" att2="1.0"/>
      <L p="0|2|0|3|1|6F|0|7B|" t="1328163457311"/>
    </Checkpoint>

``attK`` maps K to the property ID of the element's kind; values are
raw integers written with a trailing ``.0``.
"""

from __future__ import annotations

import logging
import os
import re
import xml.etree.ElementTree as ET
from dataclasses import dataclass
from pathlib import Path

from .ingest_sources import SourceError, format_log_line, parse_log_line
from .network_model import EnvState, LinkState, NetworkState, NodeState
from .packet_codec import (
    DecodeError,
    RawPacket,
    decode_packet,
    format_hex_log,
    parse_hex_log,
    HexLogError,
)
from .spec_manager import (
    NetworkSpec,
    PacketSpec,
    PropertyKind,
    parse_network_spec,
    parse_packet_spec,
)

logger = logging.getLogger(__name__)


class StoreError(Exception):
    pass


class CheckpointNotFound(StoreError):
    def __init__(self, t: int):
        super().__init__(f"no checkpoint at t={t}")
        self.t = t


@dataclass(frozen=True)
class LogEntry:
    t: int
    data: bytes


@dataclass(frozen=True)
class Checkpoint:
    t: int
    state: NetworkState
    logs: tuple[LogEntry, ...]


def _fmt_raw(value: int) -> str:
    return f"{value}.0"


def _parse_raw(text: str, where: str) -> int:
    try:
        value = float(text)
    except ValueError:
        raise StoreError(f"{where}: bad raw value {text!r}") from None
    if value != int(value):
        raise StoreError(f"{where}: raw value {text!r} is not an integer")
    return int(value)


def serialize_checkpoint(cp: Checkpoint) -> str:
    """Emit the checkpoint dialect; stable ordering, 2-space indent."""
    body: list[str] = []
    for addr in sorted(cp.state.nodes):
        node = cp.state.nodes[addr]
        attrs = f' addr="{addr}"' + "".join(
            f' att{pid}="{_fmt_raw(node.raw_props[pid])}"'
            for pid in sorted(node.raw_props)
        )
        if not node.links:
            body.append(f"  <Node{attrs}/>")
            continue
        body.append(f"  <Node{attrs}>")
        for dst in sorted(node.links):
            link = node.links[dst]
            latts = "".join(
                f' att{pid}="{_fmt_raw(link.raw_props[pid])}"'
                for pid in sorted(link.raw_props)
            )
            body.append(f'    <Link{latts} dest="{dst}"/>')
        body.append("  </Node>")
    if cp.state.env.raw_props:
        eatts = "".join(
            f' att{pid}="{_fmt_raw(cp.state.env.raw_props[pid])}"'
            for pid in sorted(cp.state.env.raw_props)
        )
        body.append(f"  <Envr{eatts}/>")
    for entry in cp.logs:
        body.append(f'  <L p="{format_hex_log(entry.data)}" t="{entry.t}"/>')

    if not body:
        return f'<Checkpoint t="{cp.t}"/>\n'
    return "\n".join([f'<Checkpoint t="{cp.t}">'] + body + ["</Checkpoint>"]) + "\n"


_ATT = re.compile(r"^att(\d+)$")


def _parse_atts(elem: ET.Element, kind: PropertyKind, net: NetworkSpec,
                where: str, skip: set[str] = frozenset()) -> dict[int, int]:
    props: dict[int, int] = {}
    for attr, value in elem.attrib.items():
        if attr in skip:
            continue
        m = _ATT.match(attr)
        if not m:
            raise StoreError(f"{where}: unknown attribute {attr!r}")
        pid = int(m.group(1))
        if net.lookup(kind, pid) is None:
            raise StoreError(f"{where}: no {kind.value} property {pid} in the spec")
        props[pid] = _parse_raw(value, f"{where} att{pid}")
    return props


def parse_checkpoint(xml_text: str, net: NetworkSpec, pkts: PacketSpec) -> Checkpoint:
    try:
        root = ET.fromstring(xml_text)
    except ET.ParseError as err:
        raise StoreError(f"malformed XML: {err}") from None
    if root.tag != "Checkpoint":
        raise StoreError(f"root element must be Checkpoint, got {root.tag!r}")
    if set(root.attrib) != {"t"}:
        raise StoreError("Checkpoint must have exactly the 't' attribute")
    try:
        cp_t = int(root.attrib["t"], 10)
    except ValueError:
        raise StoreError(f"bad checkpoint time {root.attrib['t']!r}") from None

    state = NetworkState.empty()
    logs: list[LogEntry] = []
    addr_prop = net.lookup(PropertyKind.NODE, 0)
    for elem in root:
        if elem.tag == "Node":
            if "addr" not in elem.attrib:
                raise StoreError("Node element missing 'addr'")
            addr = _parse_raw(elem.attrib["addr"], "Node addr")
            if addr_prop is None:
                raise StoreError("checkpoint has nodes but the spec has no "
                                 "Node property 0")
            if not addr_prop.min <= addr <= addr_prop.max:
                raise StoreError(f"node address {addr} outside "
                                 f"[{addr_prop.min}, {addr_prop.max}]")
            if addr in state.nodes:
                raise StoreError(f"duplicate node {addr}")
            where = f"node {addr}"
            node = NodeState(
                address=addr,
                raw_props=_parse_atts(elem, PropertyKind.NODE, net, where,
                                      skip={"addr"}),
            )
            for child in elem:
                if child.tag != "Link":
                    raise StoreError(f"{where}: unknown element <{child.tag}>")
                if "dest" not in child.attrib:
                    raise StoreError(f"{where}: Link missing 'dest'")
                dst = _parse_raw(child.attrib["dest"], f"{where} link dest")
                if dst in node.links:
                    raise StoreError(f"{where}: duplicate link to {dst}")
                node.links[dst] = LinkState(
                    dest=dst,
                    raw_props=_parse_atts(child, PropertyKind.LINK, net,
                                          f"{where} link {dst}", skip={"dest"}),
                )
            state.nodes[addr] = node
        elif elem.tag == "Envr":
            if len(elem) > 0:
                raise StoreError("Envr element cannot have children")
            state.env = EnvState(
                raw_props=_parse_atts(elem, PropertyKind.ENVR, net, "Envr"))
        elif elem.tag == "L":
            if set(elem.attrib) != {"p", "t"}:
                raise StoreError("L element must have exactly 'p' and 't'")
            try:
                t = int(elem.attrib["t"], 10)
            except ValueError:
                raise StoreError(f"bad log time {elem.attrib['t']!r}") from None
            try:
                data = parse_hex_log(elem.attrib["p"])
            except HexLogError as err:
                raise StoreError(f"log at t={t}: {err}") from None
            try:
                decode_packet(RawPacket(data, t), net, pkts)
            except DecodeError as err:
                raise StoreError(f"log at t={t} does not decode: {err}") from None
            logs.append(LogEntry(t=t, data=data))
        else:
            raise StoreError(f"Checkpoint: unknown element <{elem.tag}>")

    for prev, cur in zip(logs, logs[1:]):
        if cur.t < prev.t:
            raise StoreError("log timestamps must be non-decreasing")
    if logs and logs[-1].t > cp_t:
        raise StoreError("log timestamps must not exceed the checkpoint time")
    return Checkpoint(t=cp_t, state=state, logs=tuple(logs))


NET_FILE = "net.xml"
PKT_FILE = "pkt.xml"
PENDING_FILE = "pending.log"


class Store:
    """Directory-backed, append-only checkpoint store."""

    def __init__(self, directory: str | Path, net: NetworkSpec, pkts: PacketSpec):
        self.directory = Path(directory)
        self.net = net
        self.pkts = pkts
        self.log_per_checkpoint = net.log_per_checkpoint
        self._checkpoints: list[Checkpoint] = []
        self.pending: list[LogEntry] = []
        self._load()

    def _load(self) -> None:
        for path in sorted(self.directory.glob("cp_*.xml")):
            try:
                cp = parse_checkpoint(path.read_text(), self.net, self.pkts)
            except StoreError as err:
                raise StoreError(f"{path}: {err}") from None
            self._checkpoints.append(cp)
        self._checkpoints.sort(key=lambda c: c.t)
        for prev, cur in zip(self._checkpoints, self._checkpoints[1:]):
            if cur.t <= prev.t:
                raise StoreError(f"checkpoint times not strictly increasing: "
                                 f"{prev.t} then {cur.t}")
        # counters are not persisted in the checkpoint dialect; rebuild the
        # packet count from the log lineage so replay math stays consistent
        total = 0
        for cp in self._checkpoints:
            total += len(cp.logs)
            cp.state.packet_count = total
            cp.state.discard_count = 0
        journal = self.directory / PENDING_FILE
        if journal.exists():
            last_t = self._checkpoints[-1].t if self._checkpoints else -1
            for lineno, line in enumerate(journal.read_text().splitlines(), 1):
                if not line.strip():
                    continue
                try:
                    t, data = parse_log_line(line)
                except SourceError as err:
                    logger.warning("%s:%d: %s (journal line dropped)",
                                   journal, lineno, err)
                    continue
                if t <= last_t and self._checkpoints:
                    # already covered by a sealed checkpoint (crash between
                    # seal and journal truncation)
                    continue
                self.pending.append(LogEntry(t=t, data=data))

    @property
    def checkpoints(self) -> tuple[Checkpoint, ...]:
        return tuple(self._checkpoints)

    def record(self, raw: RawPacket, post_state: NetworkState) -> Checkpoint | None:
        """Journal one applied packet; seals a checkpoint when due.

        `post_state` must be the live state *after* the packet was
        applied; it is snapshotted if a checkpoint is sealed.
        """
        entry = LogEntry(t=raw.received_at, data=raw.data)
        with open(self.directory / PENDING_FILE, "a", encoding="utf-8",
                  newline="\n") as fh:
            fh.write(format_log_line(entry.t, entry.data) + "\n")
        self.pending.append(entry)
        if len(self.pending) < self.log_per_checkpoint:
            return None
        return self._seal(post_state)

    def seal_partial(self, state: NetworkState) -> Checkpoint | None:
        """Seal whatever is pending (clean shutdown); None if nothing is."""
        if not self.pending:
            return None
        return self._seal(state)

    def _seal(self, post_state: NetworkState) -> Checkpoint:
        t = self.pending[-1].t
        if self._checkpoints and t <= self._checkpoints[-1].t:
            raise StoreError(
                f"cannot seal checkpoint at t={t}: not after the previous "
                f"checkpoint (t={self._checkpoints[-1].t})"
            )
        cp = Checkpoint(t=t, state=post_state.snapshot(), logs=tuple(self.pending))
        path = self.directory / f"cp_{t}.xml"
        tmp = path.with_suffix(".tmp")
        tmp.write_text(serialize_checkpoint(cp), encoding="utf-8")
        os.replace(tmp, path)
        self._checkpoints.append(cp)
        self.pending.clear()
        (self.directory / PENDING_FILE).write_text("", encoding="utf-8")
        return cp

    def list_checkpoints(self, from_t: int | None = None,
                         to_t: int | None = None) -> list[tuple[int, int, int]]:
        """(t, node count, log count) for checkpoints with from_t <= t <= to_t."""
        out = []
        for cp in self._checkpoints:
            if from_t is not None and cp.t < from_t:
                continue
            if to_t is not None and cp.t > to_t:
                continue
            out.append((cp.t, len(cp.state.nodes), len(cp.logs)))
        return out

    def load_checkpoint(self, t: int) -> Checkpoint:
        for cp in self._checkpoints:
            if cp.t == t:
                return cp
        raise CheckpointNotFound(t)

    def checkpoint_xml(self, t: int) -> str:
        path = self.directory / f"cp_{t}.xml"
        if not path.exists():
            raise CheckpointNotFound(t)
        return path.read_text(encoding="utf-8")

    def all_logs(self) -> list[LogEntry]:
        """Every log in stream order: sealed checkpoints, then pending."""
        out: list[LogEntry] = []
        for cp in self._checkpoints:
            out.extend(cp.logs)
        out.extend(self.pending)
        return out

    def logs_after_checkpoint(self, index: int) -> list[LogEntry]:
        """Logs strictly after checkpoint `index` (-1 = from the start)."""
        out: list[LogEntry] = []
        for cp in self._checkpoints[index + 1:]:
            out.extend(cp.logs)
        out.extend(self.pending)
        return out

    def time_range(self) -> tuple[int, int]:
        """(first log t, last known t); raises StoreError when empty."""
        logs = self.all_logs()
        if not logs:
            raise StoreError("store is empty")
        last = max(logs[-1].t,
                   self._checkpoints[-1].t if self._checkpoints else 0)
        return logs[0].t, last


def init_store(directory: str | Path, net_xml: str, pkt_xml: str) -> Store:
    """Create or reopen a store, pinning the spec files alongside the data.

    Reopening with different spec text is refused: recorded bytes are
    only meaningful under the specs they were decoded with.
    """
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    net_path = directory / NET_FILE
    pkt_path = directory / PKT_FILE
    for path, text in ((net_path, net_xml), (pkt_path, pkt_xml)):
        if path.exists():
            if path.read_text(encoding="utf-8") != text:
                raise StoreError(f"{path} differs from the supplied spec; "
                                 "refusing to mix specs in one store")
        else:
            path.write_text(text, encoding="utf-8")
    net = parse_network_spec(net_xml)
    pkts = parse_packet_spec(pkt_xml, net)
    return Store(directory, net, pkts)


def open_store(directory: str | Path) -> Store:
    """Open an existing store using the spec files stored inside it."""
    directory = Path(directory)
    net_path = directory / NET_FILE
    pkt_path = directory / PKT_FILE
    if not net_path.exists() or not pkt_path.exists():
        raise StoreError(f"{directory} is not a store (missing {NET_FILE}/{PKT_FILE})")
    net = parse_network_spec(net_path.read_text(encoding="utf-8"))
    pkts = parse_packet_spec(pkt_path.read_text(encoding="utf-8"), net)
    return Store(directory, net, pkts)
