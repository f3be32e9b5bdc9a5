import time

import pytest
from fastapi.testclient import TestClient

from nviz.checkpoint_store import open_store, parse_checkpoint
from nviz.gateway_service import ServerConfig, build_app, state_to_json
from nviz.network_model import apply_packet
from nviz.packet_codec import RawPacket, decode_packet
from nviz.replay_engine import state_at

SAMPLE_TEMP = "0|2|0|3|1|6F|0|7B|"  # UpdateTemperature addr=3 vref=367 temp=123
SAMPLE_ASSOC = "0|1|0|2|0|7|91|3|"  # Associate 2 -> 7


def make_config(tmp_path, net_xml, pkt_xml, source="sim:seed=1,count=0",
                lpc=None) -> ServerConfig:
    if lpc is not None:
        net_xml = net_xml.replace('LogPerCheckpoint="100"',
                                  f'LogPerCheckpoint="{lpc}"')
    net_path = tmp_path / "net.xml"
    pkt_path = tmp_path / "pkt.xml"
    net_path.write_text(net_xml)
    pkt_path.write_text(pkt_xml)
    return ServerConfig(store_dir=tmp_path / "db", net_path=net_path,
                        pkt_path=pkt_path, source=source)


def without_seen(obj):
    """Strip last_seen: the checkpoint dialect does not persist it."""
    if isinstance(obj, dict):
        return {k: without_seen(v) for k, v in obj.items() if k != "last_seen"}
    if isinstance(obj, list):
        return [without_seen(v) for v in obj]
    return obj


def wait_for(client, predicate, timeout=5.0):
    deadline = time.monotonic() + timeout
    while time.monotonic() < deadline:
        body = client.get("/api/state").json()
        if predicate(body):
            return body
        time.sleep(0.01)
    raise AssertionError("condition not reached before timeout")


@pytest.fixture()
def client(tmp_path, net_xml, pkt_xml):
    cfg = make_config(tmp_path, net_xml, pkt_xml)
    with TestClient(build_app(cfg)) as c:
        c.cfg = cfg
        yield c


def test_spec_pass_through(client, net_xml, pkt_xml):
    r = client.get("/api/spec/network")
    assert r.status_code == 200
    assert r.text == net_xml
    assert client.get("/api/spec/packet").text == pkt_xml


def test_state_after_first_sample_log(client):
    assert client.post("/api/simulate", content=SAMPLE_TEMP).status_code == 202
    body = wait_for(client, lambda b: b["packet_count"] == 1)
    node = body["nodes"]["3"]
    assert node["props"]["2"]["raw"] == 123
    assert node["props"]["3"]["raw"] == 367
    assert node["props"]["2"]["value"] == pytest.approx(40.98882833787466, rel=1e-9)
    assert node["props"]["2"]["name"] == "Temperature"


def test_discarded_packet_counts(client):
    client.post("/api/simulate", content="0|9|1|2|")  # unknown packet type
    body = wait_for(client, lambda b: b["discard_count"] == 1)
    assert body["packet_count"] == 0


def test_simulate_rejects_bad_hex(client):
    r = client.post("/api/simulate", content="0|GG|")
    assert r.status_code == 400
    assert set(r.json()) == {"code", "message"}


def test_checkpoint_endpoints(tmp_path, net_xml, pkt_xml):
    cfg = make_config(tmp_path, net_xml, pkt_xml,
                      source="sim:seed=2,rate=50,count=10", lpc=3)
    with TestClient(build_app(cfg)) as client:
        wait_for(client, lambda b: b["packet_count"] == 10)
        r = client.get("/api/checkpoints").json()
        assert len(r["checkpoints"]) == 3
        assert all(c["logs"] == 3 for c in r["checkpoints"])
        assert r["pending_logs"] == 1
        t = r["checkpoints"][0]["t"]
        xml = client.get(f"/api/checkpoints/{t}")
        assert xml.status_code == 200
        assert xml.text.startswith(f'<Checkpoint t="{t}">')
        missing = client.get("/api/checkpoints/424242")
        assert missing.status_code == 404
        assert set(missing.json()) == {"code", "message"}


def test_live_websocket_two_subscribers_identical(client):
    with client.websocket_connect("/ws/live") as ws1, \
         client.websocket_connect("/ws/live") as ws2:
        time.sleep(0.1)  # let both subscriptions land
        client.post("/api/simulate", content=SAMPLE_TEMP)
        client.post("/api/simulate", content=SAMPLE_ASSOC)
        seq1 = [ws1.receive_json() for _ in range(4)]
        seq2 = [ws2.receive_json() for _ in range(4)]
    assert seq1 == seq2
    assert [e["type"] for e in seq1] == ["packet", "diff", "packet", "diff"]
    assert seq1[0]["description"] == "UpdateTemperature"
    fields = {f["name"]: f for f in seq1[0]["fields"]}
    assert fields["Temperature"]["raw"] == 123
    assert fields["Temperature"]["value"] == pytest.approx(40.98882833787466)


def test_live_websocket_discard_event(client):
    with client.websocket_connect("/ws/live") as ws:
        time.sleep(0.1)
        client.post("/api/simulate", content="0|9|1|2|")
        event = ws.receive_json()
    assert event["type"] == "discard"
    assert event["error"] == "UnknownPacketType"


def test_checkpoint_event_follows_diff(tmp_path, net_xml, pkt_xml):
    cfg = make_config(tmp_path, net_xml, pkt_xml, lpc=3)
    with TestClient(build_app(cfg)) as client:
        with client.websocket_connect("/ws/live") as ws:
            time.sleep(0.1)
            for _ in range(3):
                client.post("/api/simulate", content=SAMPLE_TEMP)
            types = [ws.receive_json()["type"] for _ in range(7)]
    assert types == ["packet", "diff", "packet", "diff", "packet", "diff",
                     "checkpoint"]


def test_replay_session_lifecycle(tmp_path, net_xml, pkt_xml):
    cfg = make_config(tmp_path, net_xml, pkt_xml,
                      source="sim:seed=4,rate=100,count=120")
    with TestClient(build_app(cfg)) as client:
        wait_for(client, lambda b: b["packet_count"] == 120)
        store = client.app.state.pipeline.store
        logs = store.all_logs()
        tau = logs[30].t

        r = client.post("/api/replay/sessions", json={"at": tau})
        assert r.status_code == 201
        sid = r.json()["id"]
        assert r.json()["cursor_t"] == tau
        expected = state_to_json(state_at(store, tau), store.net)
        assert r.json()["state"] == expected

        # GET returns the same state
        assert client.get(f"/api/replay/{sid}").json()["state"] == expected

        # step forward and back
        fwd = client.post(f"/api/replay/{sid}/step", json={"dir": "forward"}).json()
        assert fwd["diff"]["entries"]
        back = client.post(f"/api/replay/{sid}/step", json={"dir": "backward"}).json()
        assert client.get(f"/api/replay/{sid}").json()["state"] == expected

        # seek matches state_at
        tau2 = logs[90].t
        r = client.post(f"/api/replay/{sid}/seek", json={"at": tau2})
        assert r.json()["state"] == state_to_json(state_at(store, tau2), store.net)
        assert r.json()["clamped"] is False

        # play drains over the replay websocket
        with client.websocket_connect(f"/ws/replay/{sid}") as ws:
            time.sleep(0.1)
            client.post(f"/api/replay/{sid}/play", json={"speed": 1e9})
            saw_end = False
            for _ in range(200):
                event = ws.receive_json()
                if event["type"] == "end":
                    saw_end = True
                    break
            assert saw_end

        assert client.delete(f"/api/replay/{sid}").status_code == 204
        assert client.get(f"/api/replay/{sid}").status_code == 404


def test_replay_session_on_empty_store(client):
    r = client.post("/api/replay/sessions", json={"at": 0})
    assert r.status_code == 409
    assert r.json()["code"] == "empty_store"


def test_state_reproducible_from_checkpoints_and_journal(tmp_path, net_xml, pkt_xml):
    """/api/state == replay of /api/checkpoints XML + pending journal."""
    cfg = make_config(tmp_path, net_xml, pkt_xml,
                      source="sim:seed=8,rate=100,count=250")
    with TestClient(build_app(cfg)) as client:
        live = wait_for(client, lambda b: b["packet_count"] == 250)
        listing = client.get("/api/checkpoints").json()

        reopened = open_store(cfg.store_dir)
        assert [c["t"] for c in listing["checkpoints"]] == \
            [cp.t for cp in reopened.checkpoints]
        last_cp = parse_checkpoint(
            client.get(f"/api/checkpoints/{listing['checkpoints'][-1]['t']}").text,
            reopened.net, reopened.pkts)
        rebuilt = last_cp.state.snapshot()
        for entry in reopened.pending:  # the pending journal
            p = decode_packet(RawPacket(entry.data, entry.t),
                              reopened.net, reopened.pkts)
            apply_packet(rebuilt, p)
        rebuilt_json = state_to_json(rebuilt, reopened.net)
        for key in ("nodes", "env"):
            assert without_seen(live[key]) == without_seen(rebuilt_json[key])


def test_pipeline_resumes_from_existing_store(tmp_path, net_xml, pkt_xml):
    cfg = make_config(tmp_path, net_xml, pkt_xml,
                      source="sim:seed=9,rate=100,count=50")
    with TestClient(build_app(cfg)) as client:
        first = wait_for(client, lambda b: b["packet_count"] == 50)
    cfg2 = ServerConfig(store_dir=cfg.store_dir, net_path=cfg.net_path,
                        pkt_path=cfg.pkt_path, source="sim:seed=10,count=0")
    with TestClient(build_app(cfg2)) as client:
        resumed = client.get("/api/state").json()
    assert without_seen(resumed["nodes"]) == without_seen(first["nodes"])
    assert resumed["env"] == first["env"]


def test_validation_error_shape(client):
    r = client.get("/api/checkpoints", params={"from": "notanumber"})
    assert r.status_code == 422
    assert set(r.json()) == {"code", "message"}
