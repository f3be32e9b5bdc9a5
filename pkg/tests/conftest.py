from pathlib import Path

import pytest

from nviz.ingest_sources import SimConfig, simulator_source
from nviz.packet_codec import RawPacket
from nviz.spec_manager import parse_network_spec, parse_packet_spec

DATA = Path(__file__).parent / "data"


@pytest.fixture(scope="session")
def net_xml() -> str:
    return (DATA / "micaz_net.xml").read_text()


@pytest.fixture(scope="session")
def pkt_xml() -> str:
    return (DATA / "micaz_pkt.xml").read_text()


@pytest.fixture(scope="session")
def checkpoint_xml() -> str:
    return (DATA / "sample_checkpoint.xml").read_text()


@pytest.fixture(scope="session")
def net(net_xml):
    return parse_network_spec(net_xml)


@pytest.fixture(scope="session")
def pkts(net_xml, pkt_xml):
    return parse_packet_spec(pkt_xml, parse_network_spec(net_xml))


@pytest.fixture(scope="session")
def sim_stream(net, pkts):
    """Factory for deterministic streams of valid RawPackets."""

    def make(seed=1, count=100, rate=10.0, mix=None, start_t=1_000_000_000_000):
        cfg = SimConfig(seed=seed, rate=rate, count=count,
                        packet_mix=mix, start_t=start_t)
        return [RawPacket(data, t) for t, data in simulator_source(cfg, net, pkts)]

    return make
