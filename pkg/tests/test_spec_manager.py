import pytest

from nviz.spec_manager import (
    PacketSpec,
    PropertyKind,
    SpecError,
    lookup_property,
    network_spec_to_xml,
    packet_spec_to_xml,
    parse_network_spec,
    parse_packet_spec,
)


def test_golden_network_spec(net):
    assert net.log_per_checkpoint == 100
    assert len(net.of_kind(PropertyKind.NODE)) == 4
    assert len(net.of_kind(PropertyKind.LINK)) == 1
    assert len(net.of_kind(PropertyKind.ENVR)) == 2
    assert net.warnings == ()


def test_golden_packet_spec(pkts):
    assert pkts.packet_id_length == 2
    assert len(pkts.packets) == 4
    lengths = {p.packet_id: p.total_length for p in pkts.packets}
    assert lengths == {1: 8, 2: 8, 3: 5, 4: 5}
    assoc = pkts.lookup(1)
    assert assoc.description == "Associate"
    assert assoc.address_indices == (0, 1)
    assert [f.name for f in assoc.fields] == [
        "SourceAddress", "DestinationAddress", "LinkStrength", "NodeFunction",
    ]


def test_lookup_property(net):
    temp = lookup_property(net, PropertyKind.NODE, 2)
    assert temp.name == "Temperature"
    assert temp.length == 2
    assert temp.convert == "x*122.3/[Vref]"
    assert lookup_property(net, PropertyKind.LINK, 1).name == "Strength"
    assert lookup_property(net, PropertyKind.ENVR, 7) is None


def test_unknown_dependent_rejected(net_xml):
    bad = net_xml.replace("x*122.3/[Vref]", "x*122.3/[Humidity]")
    with pytest.raises(SpecError) as exc:
        parse_network_spec(bad)
    assert "Humidity" in str(exc.value)


def test_max_exceeding_length_capacity(net_xml):
    bad = net_xml.replace(
        'ID="1" convert="x" length="1" max="4" min="1"',
        'ID="1" convert="x" length="1" max="300" min="1"',
    )
    with pytest.raises(SpecError) as exc:
        parse_network_spec(bad)
    assert "255" in str(exc.value)


def test_min_greater_than_max(net_xml):
    bad = net_xml.replace('max="23" min="0"', 'max="23" min="24"')
    with pytest.raises(SpecError) as exc:
        parse_network_spec(bad)
    assert "min 24 > max 23" in str(exc.value)


def test_duplicate_property_id(net_xml):
    bad = net_xml.replace(
        '<Property ID="3" convert="1.223*1024/x"',
        '<Property ID="2" convert="1.223*1024/x"',
    )
    with pytest.raises(SpecError) as exc:
        parse_network_spec(bad)
    assert "duplicate ID" in str(exc.value)


def test_dependency_cycle(net_xml):
    bad = net_xml.replace(
        'convert="1.223*1024/x" length="2" max="1023" min="0">Vref',
        'convert="x/[Temperature]" length="2" max="1023" min="0">Vref',
    )
    with pytest.raises(SpecError) as exc:
        parse_network_spec(bad)
    assert "cycle" in str(exc.value)


def test_unknown_attribute_rejected(net_xml):
    bad = net_xml.replace("LogPerCheckpoint=", 'Units="C" LogPerCheckpoint=')
    with pytest.raises(SpecError) as exc:
        parse_network_spec(bad)
    assert "Units" in str(exc.value)


def test_unknown_element_rejected(net_xml):
    bad = net_xml.replace("</NetworkSpecification>",
                          "<Extras/></NetworkSpecification>")
    with pytest.raises(SpecError) as exc:
        parse_network_spec(bad)
    assert "Extras" in str(exc.value)


def test_malformed_xml():
    with pytest.raises(SpecError) as exc:
        parse_network_spec("<NetworkSpecification")
    assert "malformed" in str(exc.value)


def test_all_diagnostics_collected(net_xml):
    bad = net_xml.replace('max="23" min="0"', 'max="23" min="24"')
    bad = bad.replace("x*122.3/[Vref]", "x*122.3/[Humidity]")
    with pytest.raises(SpecError) as exc:
        parse_network_spec(bad)
    assert len(exc.value.diagnostics) == 2


def test_missing_address_property_warns(net_xml):
    trimmed = net_xml.replace(
        '<Property ID="0" convert="x" length="2" max="65535" min="0">Address</Property>\n',
        "",
    )
    spec = parse_network_spec(trimmed)
    assert any("Node property" in w for w in spec.warnings)


def test_packet_field_unknown_property(net, pkt_xml):
    bad = pkt_xml.replace('<Field ID="3" type="Node">VRef</Field>',
                          '<Field ID="9" type="Node">VRef</Field>')
    with pytest.raises(SpecError) as exc:
        parse_packet_spec(bad, net)
    assert "Node property 9" in str(exc.value)


def test_empty_packet_spec(net):
    spec = parse_packet_spec('<PacketSpecification PacketIDLength="2"/>', net)
    assert isinstance(spec, PacketSpec)
    assert spec.packets == ()


def test_duplicate_packet_id(net, pkt_xml):
    bad = pkt_xml.replace('<Packet ID="3" description="Update Function">',
                          '<Packet ID="2" description="Update Function">')
    with pytest.raises(SpecError) as exc:
        parse_packet_spec(bad, net)
    assert "duplicate" in str(exc.value)


def test_link_field_requires_two_addresses(net):
    bad = """<PacketSpecification PacketIDLength="2">
      <Packet ID="1" description="Broken">
        <Field ID="0" type="Node">Source</Field>
        <Field ID="1" type="Link">Strength</Field>
      </Packet>
    </PacketSpecification>"""
    with pytest.raises(SpecError) as exc:
        parse_packet_spec(bad, net)
    assert "two address fields" in str(exc.value)


def test_three_address_fields_rejected(net):
    bad = """<PacketSpecification PacketIDLength="2">
      <Packet ID="1" description="Broken">
        <Field ID="0" type="Node">A</Field>
        <Field ID="0" type="Node">B</Field>
        <Field ID="0" type="Node">C</Field>
      </Packet>
    </PacketSpecification>"""
    with pytest.raises(SpecError) as exc:
        parse_packet_spec(bad, net)
    assert "more than two" in str(exc.value)


def test_node_fields_require_address_property(net_xml, pkt_xml):
    trimmed = net_xml.replace(
        '<Property ID="0" convert="x" length="2" max="65535" min="0">Address</Property>\n',
        "",
    )
    net = parse_network_spec(trimmed)
    # packet 4 only has Envr fields, so a spec with just it still parses
    envr_only = """<PacketSpecification PacketIDLength="2">
      <Packet ID="4" description="Update Environment">
        <Field ID="1" type="Envr">Channel</Field>
      </Packet>
    </PacketSpecification>"""
    assert parse_packet_spec(envr_only, net).packets[0].total_length == 3
    # address fields themselves no longer resolve
    with pytest.raises(SpecError):
        parse_packet_spec(pkt_xml, net)
    # a packet with only non-address Node fields resolves but has no way
    # to name its subject node
    node_no_addr = """<PacketSpecification PacketIDLength="2">
      <Packet ID="3" description="Update Function">
        <Field ID="1" type="Node">Function</Field>
      </Packet>
    </PacketSpecification>"""
    with pytest.raises(SpecError) as exc:
        parse_packet_spec(node_no_addr, net)
    assert "no Node property 0" in str(exc.value)


def test_packet_id_must_fit_id_length(net):
    bad = """<PacketSpecification PacketIDLength="1">
      <Packet ID="256" description="TooBig"/>
    </PacketSpecification>"""
    with pytest.raises(SpecError) as exc:
        parse_packet_spec(bad, net)
    assert "fit" in str(exc.value)


def test_network_spec_round_trip(net):
    assert parse_network_spec(network_spec_to_xml(net)) == net


def test_packet_spec_round_trip(net, pkts):
    assert parse_packet_spec(packet_spec_to_xml(pkts), net) == pkts


def test_property_order_preserved(net):
    node_ids = [p.id for p in net.of_kind(PropertyKind.NODE)]
    assert node_ids == [0, 1, 2, 3]


def test_total_length_invariant(net, pkts):
    for fmt in pkts.packets:
        total = pkts.packet_id_length + sum(p.length for p in fmt.resolved)
        assert fmt.total_length == total
