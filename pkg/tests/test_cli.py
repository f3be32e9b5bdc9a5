import re

import pytest

from nviz.checkpoint_store import init_store, parse_checkpoint, open_store
from nviz.cli import main
from nviz.ingest_sources import file_source
from nviz.network_model import NetworkState, apply_packet
from nviz.packet_codec import RawPacket, decode_packet
from nviz.replay_engine import state_at
from nviz.checkpoint_store import Checkpoint, serialize_checkpoint

from tests.conftest import DATA

NET = str(DATA / "micaz_net.xml")
PKT = str(DATA / "micaz_pkt.xml")


def test_validate_golden(capsys):
    assert main(["validate", "--net", NET, "--pkt", PKT]) == 0
    out = capsys.readouterr().out
    lengths = re.findall(r"packet (\d+) .*: (\d+) bytes", out)
    assert {int(a): int(b) for a, b in lengths} == {1: 8, 2: 8, 3: 5, 4: 5}


def test_validate_bad_spec(tmp_path, net_xml, capsys):
    bad = tmp_path / "bad.xml"
    bad.write_text(net_xml.replace('max="23" min="0"', 'max="23" min="42"'))
    assert main(["validate", "--net", str(bad), "--pkt", PKT]) == 1
    err = capsys.readouterr().err
    assert "min 42 > max 23" in err


def test_decode_golden(capsys):
    assert main(["decode", "--net", NET, "--pkt", PKT,
                 "--hex", "0|2|0|3|1|6F|0|7B|"]) == 0
    out = capsys.readouterr().out
    assert "UpdateTemperature (packet 2)" in out
    assert "NodeAddress: raw=3" in out
    assert "VRef: raw=367" in out
    assert "Temperature: raw=123" in out
    # converted temperature = 123*122.3/367
    assert "40.9888" in out


def test_decode_bad_packet(capsys):
    assert main(["decode", "--net", NET, "--pkt", PKT, "--hex", "0|9|"]) == 1
    assert "unknown packet type" in capsys.readouterr().err


def test_usage_error_exits_2():
    with pytest.raises(SystemExit) as exc:
        main(["decode", "--net", NET])
    assert exc.value.code == 2


def test_simulate_writes_log_file(tmp_path, net, pkts, capsys):
    out = tmp_path / "sim.log"
    assert main(["simulate", "--net", NET, "--pkt", PKT, "--seed", "5",
                 "--rate", "20", "--count", "50", "--out", str(out)]) == 0
    events = list(file_source(out))
    assert len(events) == 50
    for t, data in events:
        decode_packet(RawPacket(data, t), net, pkts)


def test_state_at_matches_engine(tmp_path, net_xml, pkt_xml, sim_stream, capsys):
    store = init_store(tmp_path / "db", net_xml, pkt_xml)
    state = NetworkState.empty()
    raws = sim_stream(seed=13, count=250)
    for raw in raws:
        apply_packet(state, decode_packet(raw, store.net, store.pkts))
        store.record(raw, state)
    tau = raws[180].received_at
    assert main(["state-at", "--store", str(tmp_path / "db"), "--at", str(tau)]) == 0
    out = capsys.readouterr().out
    reopened = open_store(tmp_path / "db")
    expected = serialize_checkpoint(
        Checkpoint(t=tau, state=state_at(reopened, tau), logs=()))
    assert out == expected
    # and it parses back as the dialect
    cp = parse_checkpoint(out, reopened.net, reopened.pkts)
    assert cp.t == tau


def test_state_at_empty_store(tmp_path, net_xml, pkt_xml, capsys):
    init_store(tmp_path / "db", net_xml, pkt_xml)
    assert main(["state-at", "--store", str(tmp_path / "db"), "--at", "5"]) == 1
    assert "no checkpoints" in capsys.readouterr().err


def test_export_log_round_trip(tmp_path, net_xml, pkt_xml, sim_stream, capsys):
    store = init_store(tmp_path / "db", net_xml, pkt_xml)
    state = NetworkState.empty()
    raws = sim_stream(seed=17, count=150)
    for raw in raws:
        apply_packet(state, decode_packet(raw, store.net, store.pkts))
        store.record(raw, state)
    out = tmp_path / "export.log"
    assert main(["export-log", "--store", str(tmp_path / "db"),
                 "--out", str(out)]) == 0
    events = list(file_source(out))
    assert events == [(r.received_at, r.data) for r in raws]


def test_export_log_time_window(tmp_path, net_xml, pkt_xml, sim_stream):
    store = init_store(tmp_path / "db", net_xml, pkt_xml)
    state = NetworkState.empty()
    raws = sim_stream(seed=17, count=150)
    for raw in raws:
        apply_packet(state, decode_packet(raw, store.net, store.pkts))
        store.record(raw, state)
    out = tmp_path / "window.log"
    lo, hi = raws[10].received_at, raws[20].received_at
    assert main(["export-log", "--store", str(tmp_path / "db"),
                 "--from", str(lo), "--to", str(hi), "--out", str(out)]) == 0
    events = list(file_source(out))
    assert all(lo <= t <= hi for t, _ in events)
    assert len(events) == 11


def test_missing_file_error(capsys):
    assert main(["validate", "--net", "/nonexistent.xml", "--pkt", PKT]) == 1
    assert "error" in capsys.readouterr().err
