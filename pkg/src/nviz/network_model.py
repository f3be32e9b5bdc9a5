"""Abstract network state: nodes, directed links and the environment.

State stores *raw* property values exactly as decoded; conversion to
engineering units happens on read via :func:`converted_view`.  Raw
storage is what makes checkpoint replay deterministic, and dependent
references in conversion expressions resolve against raw values.

A node's identity is the raw value of Node property 0 carried by a
packet's first address field; a second address field names the
destination of a directed link.  Applying a packet mutates the state in
place and returns a :class:`StateDiff` describing exactly what changed,
so ``pre ⊕ diff == post`` always holds.
"""

from __future__ import annotations

import copy
from dataclasses import dataclass, field

from . import convert_expr
from .packet_codec import ParsedPacket
from .spec_manager import NetworkSpec, PropertyKind

# diff subjects: ("node", addr) | ("link", src, dst) | ("env",)
Subject = tuple


class ApplyError(Exception):
    pass


@dataclass
class LinkState:
    dest: int
    raw_props: dict[int, int] = field(default_factory=dict)
    last_seen: int = 0


@dataclass
class NodeState:
    address: int
    raw_props: dict[int, int] = field(default_factory=dict)
    links: dict[int, LinkState] = field(default_factory=dict)
    last_seen: int = 0


@dataclass
class EnvState:
    raw_props: dict[int, int] = field(default_factory=dict)


@dataclass
class NetworkState:
    nodes: dict[int, NodeState] = field(default_factory=dict)
    env: EnvState = field(default_factory=EnvState)
    packet_count: int = 0
    discard_count: int = 0

    @classmethod
    def empty(cls) -> "NetworkState":
        return cls()

    def snapshot(self) -> "NetworkState":
        return copy.deepcopy(self)


@dataclass(frozen=True)
class DiffEntry:
    """One changed value.

    ``prop_id`` None means the subject's last-seen timestamp; ``new``
    None (reverse diffs only) means the value or subject went away.
    """

    subject: Subject
    prop_id: int | None
    old: int | None
    new: int | None


@dataclass(frozen=True)
class StateDiff:
    t: int
    entries: tuple[DiffEntry, ...]
    packet_count: int
    discard_count: int


def apply_packet(state: NetworkState, p: ParsedPacket) -> StateDiff:
    """Apply a decoded packet, mutating `state`; returns the minimal diff.

    Raises :class:`ApplyError` (and counts a discard) if the packet has
    Node-kind fields but no address field to name the subject node.
    """
    addr_idx = p.format.address_indices
    has_node_fields = any(
        f.property_kind is PropertyKind.NODE for f, _ in p.values
    )
    if has_node_fields and not addr_idx:
        state.discard_count += 1
        raise ApplyError(
            f"packet {p.packet_id} carries Node fields but no address field"
        )

    src = p.values[addr_idx[0]][1] if addr_idx else None
    dst = p.values[addr_idx[1]][1] if len(addr_idx) > 1 else None

    entries: list[DiffEntry] = []
    node: NodeState | None = None
    if src is not None:
        node = state.nodes.get(src)
        if node is None:
            node = NodeState(address=src)
            state.nodes[src] = node

    link: LinkState | None = None
    for i, (fld, value) in enumerate(p.values):
        if fld.property_kind is PropertyKind.NODE:
            if i in addr_idx:
                continue
            assert node is not None
            old = node.raw_props.get(fld.property_id)
            if old != value:
                entries.append(DiffEntry(("node", src), fld.property_id, old, value))
                node.raw_props[fld.property_id] = value
        elif fld.property_kind is PropertyKind.LINK:
            assert node is not None and dst is not None
            if link is None:
                link = node.links.get(dst)
                if link is None:
                    link = LinkState(dest=dst)
                    node.links[dst] = link
            old = link.raw_props.get(fld.property_id)
            if old != value:
                entries.append(DiffEntry(("link", src, dst), fld.property_id, old, value))
                link.raw_props[fld.property_id] = value
        else:
            old = state.env.raw_props.get(fld.property_id)
            if old != value:
                entries.append(DiffEntry(("env",), fld.property_id, old, value))
                state.env.raw_props[fld.property_id] = value

    if node is not None:
        entries.append(DiffEntry(("node", src), None, node.last_seen or None,
                                 p.received_at))
        node.last_seen = p.received_at
    if link is not None:
        entries.append(DiffEntry(("link", src, dst), None, link.last_seen or None,
                                 p.received_at))
        link.last_seen = p.received_at

    state.packet_count += 1
    return StateDiff(t=p.received_at, entries=tuple(entries),
                     packet_count=state.packet_count,
                     discard_count=state.discard_count)


def apply_diff(state: NetworkState, diff: StateDiff) -> None:
    """Replay a diff onto a state (used by views and the reverse step)."""
    for e in diff.entries:
        kind = e.subject[0]
        if kind == "env":
            if e.new is None:
                state.env.raw_props.pop(e.prop_id, None)
            else:
                state.env.raw_props[e.prop_id] = e.new
            continue
        if kind == "node":
            addr = e.subject[1]
            if e.new is None and e.prop_id is None:
                state.nodes.pop(addr, None)
                continue
            node = state.nodes.setdefault(addr, NodeState(address=addr))
            target_props, holder = node.raw_props, node
        else:
            src, dst = e.subject[1], e.subject[2]
            node = state.nodes.setdefault(src, NodeState(address=src))
            if e.new is None and e.prop_id is None:
                node.links.pop(dst, None)
                continue
            lnk = node.links.setdefault(dst, LinkState(dest=dst))
            target_props, holder = lnk.raw_props, lnk
        if e.prop_id is None:
            holder.last_seen = e.new
        elif e.new is None:
            target_props.pop(e.prop_id, None)
        else:
            target_props[e.prop_id] = e.new
    state.packet_count = diff.packet_count
    state.discard_count = diff.discard_count


def compute_diff(old: NetworkState, new: NetworkState, t: int) -> StateDiff:
    """Diff two states; ``apply_diff(old, result)`` makes old equal new."""
    entries: list[DiffEntry] = []

    for pid in sorted(old.env.raw_props.keys() | new.env.raw_props.keys()):
        a, b = old.env.raw_props.get(pid), new.env.raw_props.get(pid)
        if a != b:
            entries.append(DiffEntry(("env",), pid, a, b))

    for addr in sorted(old.nodes.keys() | new.nodes.keys()):
        a_node, b_node = old.nodes.get(addr), new.nodes.get(addr)
        if b_node is None:
            entries.append(DiffEntry(("node", addr), None, a_node.last_seen, None))
            continue
        a_props = a_node.raw_props if a_node else {}
        for pid in sorted(a_props.keys() | b_node.raw_props.keys()):
            a, b = a_props.get(pid), b_node.raw_props.get(pid)
            if a != b:
                entries.append(DiffEntry(("node", addr), pid, a, b))
        a_seen = a_node.last_seen if a_node else None
        if a_seen != b_node.last_seen:
            entries.append(DiffEntry(("node", addr), None, a_seen, b_node.last_seen))
        a_links = a_node.links if a_node else {}
        for dst in sorted(a_links.keys() | b_node.links.keys()):
            a_lnk, b_lnk = a_links.get(dst), b_node.links.get(dst)
            if b_lnk is None:
                entries.append(DiffEntry(("link", addr, dst), None,
                                         a_lnk.last_seen, None))
                continue
            ap = a_lnk.raw_props if a_lnk else {}
            for pid in sorted(ap.keys() | b_lnk.raw_props.keys()):
                a, b = ap.get(pid), b_lnk.raw_props.get(pid)
                if a != b:
                    entries.append(DiffEntry(("link", addr, dst), pid, a, b))
            a_seen = a_lnk.last_seen if a_lnk else None
            if a_seen != b_lnk.last_seen:
                entries.append(DiffEntry(("link", addr, dst), None,
                                         a_seen, b_lnk.last_seen))

    return StateDiff(t=t, entries=tuple(entries),
                     packet_count=new.packet_count,
                     discard_count=new.discard_count)


@dataclass(frozen=True)
class ConvertedValue:
    raw: int
    value: float | None
    error: str | None = None


@dataclass(frozen=True)
class ConvertedLink:
    dest: int
    props: dict[int, ConvertedValue]
    last_seen: int


@dataclass(frozen=True)
class ConvertedNode:
    address: int
    props: dict[int, ConvertedValue]
    links: dict[int, ConvertedLink]
    last_seen: int


@dataclass(frozen=True)
class ConvertedState:
    nodes: dict[int, ConvertedNode]
    env: dict[int, ConvertedValue]


def _convert_props(raw_props: dict[int, int], kind: PropertyKind,
                   net: NetworkSpec) -> dict[int, ConvertedValue]:
    env = {}
    for pid, raw in raw_props.items():
        prop = net.lookup(kind, pid)
        if prop is not None:
            env[prop.name] = raw
    out: dict[int, ConvertedValue] = {}
    for pid in net.eval_order.get(kind, ()):
        if pid not in raw_props:
            continue
        prop = net.lookup(kind, pid)
        raw = raw_props[pid]
        try:
            out[pid] = ConvertedValue(raw, convert_expr.eval_expr(prop.expr, raw, env))
        except convert_expr.EvalError as err:
            out[pid] = ConvertedValue(raw, None, str(err))
    return out


def convert_field_value(state: NetworkState, net: NetworkSpec,
                        kind: PropertyKind, pid: int, raw: int,
                        src: int | None = None,
                        dst: int | None = None) -> tuple[float | None, str | None]:
    """Convert one field against the subject's current raw values.

    Returns (value, None) or (None, error text) when unconvertible.
    """
    prop = net.lookup(kind, pid)
    if kind is PropertyKind.ENVR:
        raw_props = state.env.raw_props
    elif kind is PropertyKind.LINK:
        node = state.nodes.get(src) if src is not None else None
        link = node.links.get(dst) if node and dst is not None else None
        raw_props = link.raw_props if link else {}
    else:
        node = state.nodes.get(src) if src is not None else None
        raw_props = node.raw_props if node else {}
    env = {}
    for k, v in raw_props.items():
        p = net.lookup(kind, k)
        if p is not None:
            env[p.name] = v
    try:
        return convert_expr.eval_expr(prop.expr, raw, env), None
    except convert_expr.EvalError as err:
        return None, str(err)


def converted_view(state: NetworkState, net: NetworkSpec) -> ConvertedState:
    """Engineering-unit view of a state; never mutates the input."""
    nodes = {}
    for addr, node in state.nodes.items():
        links = {
            dst: ConvertedLink(dest=dst,
                               props=_convert_props(lnk.raw_props,
                                                    PropertyKind.LINK, net),
                               last_seen=lnk.last_seen)
            for dst, lnk in node.links.items()
        }
        nodes[addr] = ConvertedNode(
            address=addr,
            props=_convert_props(node.raw_props, PropertyKind.NODE, net),
            links=links,
            last_seen=node.last_seen,
        )
    return ConvertedState(
        nodes=nodes,
        env=_convert_props(state.env.raw_props, PropertyKind.ENVR, net),
    )
