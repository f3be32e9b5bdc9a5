"""Network and packet specification files.

Two XML dialects describe a deployment: the network specification lists
the node/link/environment properties (id, byte length, raw range and
conversion expression), and the packet specification lists the packet
formats whose fields bind to those properties by (kind, id).

Parsing is strict: unknown elements or attributes are rejected, every
cross-reference is resolved, and conversion-expression dependencies are
checked for existence and acyclicity up front.  All diagnostics for a
file are collected and reported together in a single :class:`SpecError`.
Parsed specs are immutable and safe to share between threads.
"""

from __future__ import annotations

import enum
import xml.etree.ElementTree as ET
from dataclasses import dataclass, field
from xml.sax.saxutils import escape, quoteattr

from .convert_expr import ConversionExpr, ExprError, parse_expr


class SpecError(Exception):
    """One or more validation failures in a specification file."""

    def __init__(self, diagnostics: list[str]):
        self.diagnostics = list(diagnostics)
        super().__init__("; ".join(self.diagnostics))


class PropertyKind(enum.Enum):
    NODE = "Node"
    LINK = "Link"
    ENVR = "Envr"


@dataclass(frozen=True)
class Property:
    kind: PropertyKind
    id: int
    name: str
    length: int  # byte count of the raw value
    min: int
    max: int
    convert: str
    expr: ConversionExpr = field(compare=False, repr=False, default=None)  # type: ignore[assignment]

    @property
    def capacity(self) -> int:
        return (1 << (8 * self.length)) - 1


@dataclass(frozen=True)
class NetworkSpec:
    log_per_checkpoint: int
    properties: tuple[Property, ...]
    warnings: tuple[str, ...] = field(compare=False, default=())
    # property ids per kind in dependency-first order, fixed at parse time
    eval_order: dict[PropertyKind, tuple[int, ...]] = field(
        compare=False, repr=False, default_factory=dict
    )
    _index: dict[tuple[PropertyKind, int], Property] = field(
        compare=False, repr=False, default_factory=dict
    )
    _by_name: dict[tuple[PropertyKind, str], Property] = field(
        compare=False, repr=False, default_factory=dict
    )

    def lookup(self, kind: PropertyKind, prop_id: int) -> Property | None:
        return self._index.get((kind, prop_id))

    def lookup_name(self, kind: PropertyKind, name: str) -> Property | None:
        return self._by_name.get((kind, name))

    def of_kind(self, kind: PropertyKind) -> list[Property]:
        return [p for p in self.properties if p.kind == kind]


@dataclass(frozen=True)
class Field:
    property_kind: PropertyKind
    property_id: int
    name: str


@dataclass(frozen=True)
class PacketFormat:
    packet_id: int
    description: str
    fields: tuple[Field, ...]
    total_length: int = field(compare=False, default=0)
    # properties resolved against the network spec, one per field
    resolved: tuple[Property, ...] = field(compare=False, repr=False, default=())
    # indices of the address fields (Node property 0)
    address_indices: tuple[int, ...] = field(compare=False, repr=False, default=())


@dataclass(frozen=True)
class PacketSpec:
    packet_id_length: int
    packets: tuple[PacketFormat, ...]
    _by_id: dict[int, PacketFormat] = field(compare=False, repr=False, default_factory=dict)

    def lookup(self, packet_id: int) -> PacketFormat | None:
        return self._by_id.get(packet_id)


def lookup_property(net: NetworkSpec, kind: PropertyKind, prop_id: int) -> Property | None:
    return net.lookup(kind, prop_id)


_SECTION_KINDS = {
    "NodeProperties": PropertyKind.NODE,
    "LinkProperties": PropertyKind.LINK,
    "EnvrProperties": PropertyKind.ENVR,
}


def _check_attrs(elem: ET.Element, allowed: set[str], where: str, diags: list[str]) -> None:
    for attr in elem.attrib:
        if attr not in allowed:
            diags.append(f"{where}: unknown attribute {attr!r}")


def _int_attr(elem: ET.Element, attr: str, where: str, diags: list[str]) -> int | None:
    raw = elem.get(attr)
    if raw is None:
        diags.append(f"{where}: missing attribute {attr!r}")
        return None
    try:
        return int(raw, 10)
    except ValueError:
        diags.append(f"{where}: attribute {attr!r} is not a decimal integer: {raw!r}")
        return None


def parse_network_spec(xml_text: str) -> NetworkSpec:
    """Parse and fully validate a network specification document."""
    try:
        root = ET.fromstring(xml_text)
    except ET.ParseError as err:
        raise SpecError([f"malformed XML: {err}"]) from None
    if root.tag != "NetworkSpecification":
        raise SpecError([f"root element must be NetworkSpecification, got {root.tag!r}"])

    diags: list[str] = []
    _check_attrs(root, {"LogPerCheckpoint"}, "NetworkSpecification", diags)
    lpc = _int_attr(root, "LogPerCheckpoint", "NetworkSpecification", diags)
    if lpc is not None and lpc < 1:
        diags.append(f"NetworkSpecification: LogPerCheckpoint must be >= 1, got {lpc}")

    properties: list[Property] = []
    seen_sections: set[str] = set()
    for section in root:
        kind = _SECTION_KINDS.get(section.tag)
        if kind is None:
            diags.append(f"NetworkSpecification: unknown element <{section.tag}>")
            continue
        if section.tag in seen_sections:
            diags.append(f"NetworkSpecification: duplicate section <{section.tag}>")
        seen_sections.add(section.tag)
        _check_attrs(section, set(), section.tag, diags)
        for elem in section:
            if elem.tag != "Property":
                diags.append(f"{section.tag}: unknown element <{elem.tag}>")
                continue
            prop = _parse_property(elem, kind, diags)
            if prop is not None:
                properties.append(prop)

    _validate_properties(properties, diags)
    if diags:
        raise SpecError(diags)

    warnings: list[str] = []
    index = {(p.kind, p.id): p for p in properties}
    if (PropertyKind.NODE, 0) not in index:
        warnings.append(
            "no Node property with ID 0: packets cannot carry node addresses"
        )
    eval_order = {k: _dependency_order(properties, k) for k in PropertyKind}
    return NetworkSpec(
        log_per_checkpoint=lpc,  # type: ignore[arg-type]
        properties=tuple(properties),
        warnings=tuple(warnings),
        eval_order=eval_order,
        _index=index,
        _by_name={(p.kind, p.name): p for p in properties},
    )


def _parse_property(elem: ET.Element, kind: PropertyKind, diags: list[str]) -> Property | None:
    where = f"{kind.value} Property"
    _check_attrs(elem, {"ID", "convert", "length", "max", "min"}, where, diags)
    if len(elem) > 0:
        diags.append(f"{where}: unexpected child element <{elem[0].tag}>")
    prop_id = _int_attr(elem, "ID", where, diags)
    if prop_id is not None:
        where = f"{kind.value} property {prop_id}"
    length = _int_attr(elem, "length", where, diags)
    vmax = _int_attr(elem, "max", where, diags)
    vmin = _int_attr(elem, "min", where, diags)
    convert = elem.get("convert")
    if convert is None:
        diags.append(f"{where}: missing attribute 'convert'")
    name = (elem.text or "").strip()
    if not name:
        diags.append(f"{where}: property name (element text) is empty")

    if None in (prop_id, length, vmax, vmin) or convert is None or not name:
        return None
    if prop_id < 0:
        diags.append(f"{where}: ID must be non-negative")
        return None
    if length < 1:
        diags.append(f"{where}: length must be >= 1, got {length}")
        return None

    expr = None
    try:
        expr = parse_expr(convert)
    except ExprError as err:
        diags.append(f"{where}: bad convert expression {convert!r}: {err}")

    capacity = (1 << (8 * length)) - 1
    if vmin > vmax:
        diags.append(f"{where}: min {vmin} > max {vmax}")
    if vmin < 0:
        diags.append(f"{where}: min {vmin} below 0 (raw values are unsigned)")
    if vmax > capacity:
        diags.append(f"{where}: max {vmax} exceeds {capacity} ({length}-byte capacity)")

    if expr is None:
        return None
    return Property(kind=kind, id=prop_id, name=name, length=length,
                    min=vmin, max=vmax, convert=convert, expr=expr)


def _validate_properties(properties: list[Property], diags: list[str]) -> None:
    seen_ids: set[tuple[PropertyKind, int]] = set()
    seen_names: set[tuple[PropertyKind, str]] = set()
    for p in properties:
        if (p.kind, p.id) in seen_ids:
            diags.append(f"{p.kind.value} property {p.id}: duplicate ID")
        seen_ids.add((p.kind, p.id))
        if (p.kind, p.name) in seen_names:
            diags.append(
                f"{p.kind.value} property {p.id}: duplicate name {p.name!r} "
                "(dependent references would be ambiguous)"
            )
        seen_names.add((p.kind, p.name))

    names_by_kind: dict[PropertyKind, set[str]] = {k: set() for k in PropertyKind}
    for p in properties:
        names_by_kind[p.kind].add(p.name)
    for p in properties:
        if p.expr is None:
            continue
        for dep in p.expr.dependencies:
            if dep not in names_by_kind[p.kind]:
                diags.append(
                    f"{p.kind.value} property {p.id}: convert references "
                    f"unknown {p.kind.value} property [{dep}]"
                )
    if diags:
        return
    for kind in PropertyKind:
        cycle = _find_cycle([p for p in properties if p.kind == kind])
        if cycle:
            diags.append(
                f"{kind.value} properties: dependency cycle "
                + " -> ".join(cycle)
            )


def _find_cycle(props: list[Property]) -> list[str] | None:
    by_name = {p.name: p for p in props}
    state: dict[str, int] = {}  # 0 visiting, 1 done
    stack: list[str] = []

    def visit(name: str) -> list[str] | None:
        if state.get(name) == 1:
            return None
        if state.get(name) == 0:
            return stack[stack.index(name):] + [name]
        state[name] = 0
        stack.append(name)
        for dep in by_name[name].expr.dependencies:
            found = visit(dep)
            if found:
                return found
        stack.pop()
        state[name] = 1
        return None

    for p in props:
        found = visit(p.name)
        if found:
            return found
    return None


def _dependency_order(properties: list[Property], kind: PropertyKind) -> tuple[int, ...]:
    """Property ids of `kind`, dependencies before dependents."""
    props = [p for p in properties if p.kind == kind]
    by_name = {p.name: p for p in props}
    order: list[int] = []
    done: set[str] = set()

    def visit(p: Property) -> None:
        if p.name in done:
            return
        done.add(p.name)
        for dep in p.expr.dependencies:
            visit(by_name[dep])
        order.append(p.id)

    for p in props:
        visit(p)
    return tuple(order)


def parse_packet_spec(xml_text: str, net: NetworkSpec) -> PacketSpec:
    """Parse a packet specification and resolve every field against `net`."""
    try:
        root = ET.fromstring(xml_text)
    except ET.ParseError as err:
        raise SpecError([f"malformed XML: {err}"]) from None
    if root.tag != "PacketSpecification":
        raise SpecError([f"root element must be PacketSpecification, got {root.tag!r}"])

    diags: list[str] = []
    _check_attrs(root, {"PacketIDLength"}, "PacketSpecification", diags)
    id_length = _int_attr(root, "PacketIDLength", "PacketSpecification", diags)
    if id_length is not None and id_length < 1:
        diags.append(f"PacketSpecification: PacketIDLength must be >= 1, got {id_length}")
        id_length = None

    packets: list[PacketFormat] = []
    seen_ids: set[int] = set()
    any_node_fields = False
    for elem in root:
        if elem.tag != "Packet":
            diags.append(f"PacketSpecification: unknown element <{elem.tag}>")
            continue
        fmt = _parse_packet(elem, net, id_length, diags)
        if fmt is None:
            continue
        if fmt.packet_id in seen_ids:
            diags.append(f"packet {fmt.packet_id}: duplicate packet ID")
            continue
        seen_ids.add(fmt.packet_id)
        if any(f.property_kind is PropertyKind.NODE for f in fmt.fields):
            any_node_fields = True
        packets.append(fmt)

    if any_node_fields and net.lookup(PropertyKind.NODE, 0) is None:
        diags.append(
            "packets carry Node fields but the network spec has no Node "
            "property 0 to serve as the address"
        )
    if diags:
        raise SpecError(diags)
    return PacketSpec(
        packet_id_length=id_length,  # type: ignore[arg-type]
        packets=tuple(packets),
        _by_id={p.packet_id: p for p in packets},
    )


def _parse_packet(elem: ET.Element, net: NetworkSpec, id_length: int | None,
                  diags: list[str]) -> PacketFormat | None:
    _check_attrs(elem, {"ID", "description"}, "Packet", diags)
    packet_id = _int_attr(elem, "ID", "Packet", diags)
    if packet_id is None:
        return None
    where = f"packet {packet_id}"
    description = elem.get("description", "")
    if packet_id < 0:
        diags.append(f"{where}: ID must be non-negative")
        return None
    if id_length is not None and packet_id > (1 << (8 * id_length)) - 1:
        diags.append(f"{where}: ID does not fit in {id_length} byte(s)")
        return None

    fields: list[Field] = []
    resolved: list[Property] = []
    ok = True
    for child in elem:
        if child.tag != "Field":
            diags.append(f"{where}: unknown element <{child.tag}>")
            ok = False
            continue
        _check_attrs(child, {"ID", "type"}, f"{where} Field", diags)
        fid = _int_attr(child, "ID", f"{where} Field", diags)
        ftype = child.get("type")
        fname = (child.text or "").strip()
        if ftype is None:
            diags.append(f"{where}: Field missing attribute 'type'")
            ok = False
            continue
        try:
            kind = PropertyKind(ftype)
        except ValueError:
            diags.append(f"{where}: Field type must be Node, Link or Envr, got {ftype!r}")
            ok = False
            continue
        if fid is None:
            ok = False
            continue
        if not fname:
            diags.append(f"{where}: field name (element text) is empty")
            ok = False
            continue
        prop = net.lookup(kind, fid)
        if prop is None:
            diags.append(f"{where}: field {fname!r} references nonexistent "
                         f"{kind.value} property {fid}")
            ok = False
            continue
        fields.append(Field(property_kind=kind, property_id=fid, name=fname))
        resolved.append(prop)

    if not ok:
        return None
    address_indices = tuple(
        i for i, f in enumerate(fields)
        if f.property_kind is PropertyKind.NODE and f.property_id == 0
    )
    if len(address_indices) > 2:
        diags.append(f"{where}: more than two address fields (Node property 0)")
        return None
    has_link = any(f.property_kind is PropertyKind.LINK for f in fields)
    if has_link and len(address_indices) != 2:
        diags.append(f"{where}: Link fields require exactly two address fields, "
                     f"found {len(address_indices)}")
        return None
    total = (id_length or 0) + sum(p.length for p in resolved)
    return PacketFormat(
        packet_id=packet_id,
        description=description,
        fields=tuple(fields),
        total_length=total,
        resolved=tuple(resolved),
        address_indices=address_indices,
    )


def network_spec_to_xml(net: NetworkSpec) -> str:
    """Serialize back to the network-specification dialect."""
    lines = [f'<NetworkSpecification LogPerCheckpoint="{net.log_per_checkpoint}">']
    for tag, kind in _SECTION_KINDS.items():
        props = net.of_kind(kind)
        if not props:
            continue
        lines.append(f"  <{tag}>")
        for p in props:
            lines.append(
                f'    <Property ID="{p.id}" convert={quoteattr(p.convert)} '
                f'length="{p.length}" max="{p.max}" min="{p.min}">'
                f"{escape(p.name)}</Property>"
            )
        lines.append(f"  </{tag}>")
    lines.append("</NetworkSpecification>")
    return "\n".join(lines) + "\n"


def packet_spec_to_xml(pkts: PacketSpec) -> str:
    """Serialize back to the packet-specification dialect."""
    lines = [f'<PacketSpecification PacketIDLength="{pkts.packet_id_length}">']
    for fmt in pkts.packets:
        lines.append(f'  <Packet ID="{fmt.packet_id}" '
                     f"description={quoteattr(fmt.description)}>")
        for f in fmt.fields:
            lines.append(f'    <Field ID="{f.property_id}" '
                         f'type="{f.property_kind.value}">{escape(f.name)}</Field>')
        lines.append("  </Packet>")
    lines.append("</PacketSpecification>")
    return "\n".join(lines) + "\n"
