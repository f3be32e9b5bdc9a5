import pytest

from nviz.checkpoint_store import (
    Checkpoint,
    CheckpointNotFound,
    LogEntry,
    Store,
    StoreError,
    init_store,
    open_store,
    parse_checkpoint,
    serialize_checkpoint,
)
from nviz.network_model import NetworkState, NodeState, apply_packet
from nviz.packet_codec import decode_packet


def ingest(store, state, raws):
    sealed = []
    for raw in raws:
        p = decode_packet(raw, store.net, store.pkts)
        apply_packet(state, p)
        cp = store.record(raw, state)
        if cp is not None:
            sealed.append(cp)
    return sealed


@pytest.fixture()
def store(tmp_path, net_xml, pkt_xml):
    return init_store(tmp_path / "db", net_xml, pkt_xml)


def test_golden_checkpoint_parse(checkpoint_xml, net, pkts):
    cp = parse_checkpoint(checkpoint_xml, net, pkts)
    assert cp.t == 1328163686181
    assert len(cp.state.nodes) == 7
    assert sum(len(n.links) for n in cp.state.nodes.values()) == 6
    assert cp.state.env.raw_props == {1: 11, 2: 1}
    assert len(cp.logs) == 10
    node0 = cp.state.nodes[0]
    assert node0.raw_props == {1: 1, 2: 102, 3: 378}
    assert node0.links[1].raw_props == {1: 123}
    assert node0.links[2].raw_props == {1: 213}


def test_checkpoint_round_trip(checkpoint_xml, net, pkts):
    cp = parse_checkpoint(checkpoint_xml, net, pkts)
    text = serialize_checkpoint(cp)
    assert parse_checkpoint(text, net, pkts) == cp


def test_serializer_reproduces_golden_text(checkpoint_xml, net, pkts):
    cp = parse_checkpoint(checkpoint_xml, net, pkts)
    assert serialize_checkpoint(cp) == checkpoint_xml


def test_single_node_serialization_byte_exact(net, pkts):
    state = NetworkState.empty()
    state.nodes[4] = NodeState(address=4, raw_props={1: 3})
    text = serialize_checkpoint(Checkpoint(t=7, state=state, logs=()))
    assert '<Node addr="4" att1="3.0"/>' in text


def test_empty_checkpoint_serialization(net, pkts):
    text = serialize_checkpoint(Checkpoint(t=5, state=NetworkState.empty(), logs=()))
    assert text == '<Checkpoint t="5"/>\n'
    assert parse_checkpoint(text, net, pkts).state == NetworkState.empty()


def test_unknown_att_rejected(net, pkts):
    with pytest.raises(StoreError) as exc:
        parse_checkpoint('<Checkpoint t="1"><Node addr="1" att9="1.0"/></Checkpoint>',
                         net, pkts)
    assert "property 9" in str(exc.value)


def test_bad_log_rejected(net, pkts):
    with pytest.raises(StoreError):
        parse_checkpoint('<Checkpoint t="9"><L p="0|9|" t="3"/></Checkpoint>',
                         net, pkts)


def test_non_integer_raw_value_rejected(net, pkts):
    with pytest.raises(StoreError):
        parse_checkpoint('<Checkpoint t="1"><Node addr="1" att1="1.5"/></Checkpoint>',
                         net, pkts)


def test_record_cadence(store, sim_stream):
    state = NetworkState.empty()
    raws = sim_stream(seed=2, count=250)
    sealed = ingest(store, state, raws[:99])
    assert sealed == []
    sealed = ingest(store, state, raws[99:100])
    assert len(sealed) == 1
    assert len(sealed[0].logs) == 100
    sealed = ingest(store, state, raws[100:])
    assert len(sealed) == 1
    assert len(store.pending) == 50
    assert len(store.checkpoints) == 2


def test_log_per_checkpoint_one(tmp_path, net_xml, pkt_xml, sim_stream):
    store = init_store(tmp_path / "db", net_xml.replace('LogPerCheckpoint="100"',
                                                        'LogPerCheckpoint="1"'),
                       pkt_xml)
    state = NetworkState.empty()
    sealed = ingest(store, state, sim_stream(seed=4, count=5))
    assert len(sealed) == 5
    assert all(len(cp.logs) == 1 for cp in sealed)


def test_list_checkpoints(store, sim_stream):
    state = NetworkState.empty()
    ingest(store, state, sim_stream(seed=2, count=250))
    entries = store.list_checkpoints()
    assert len(entries) == 2
    assert [e[2] for e in entries] == [100, 100]
    assert entries[0][0] < entries[1][0]
    assert store.list_checkpoints(from_t=entries[1][0])[0] == entries[1]
    assert store.list_checkpoints(from_t=entries[1][0] + 1, to_t=entries[0][0]) == []


def test_load_checkpoint_not_found(store):
    with pytest.raises(CheckpointNotFound):
        store.load_checkpoint(12345)


def test_replay_identity(store, sim_stream):
    """Each checkpoint's logs applied to its predecessor give its state."""
    state = NetworkState.empty()
    ingest(store, state, sim_stream(seed=9, count=300))
    prev = NetworkState.empty()
    for cp in store.checkpoints:
        replayed = prev.snapshot()
        for entry in cp.logs:
            from nviz.packet_codec import RawPacket
            p = decode_packet(RawPacket(entry.data, entry.t), store.net, store.pkts)
            apply_packet(replayed, p)
        assert replayed == cp.state
        prev = cp.state


def test_store_reopen_recovers_pending(tmp_path, net_xml, pkt_xml, sim_stream):
    store = init_store(tmp_path / "db", net_xml, pkt_xml)
    state = NetworkState.empty()
    ingest(store, state, sim_stream(seed=2, count=250))
    reopened = open_store(tmp_path / "db")
    assert len(reopened.checkpoints) == 2
    assert len(reopened.pending) == 50
    assert reopened.pending == store.pending
    assert [cp.t for cp in reopened.checkpoints] == [cp.t for cp in store.checkpoints]


def test_seal_partial_on_shutdown(store, sim_stream):
    state = NetworkState.empty()
    ingest(store, state, sim_stream(seed=2, count=150))
    cp = store.seal_partial(state)
    assert cp is not None
    assert len(cp.logs) == 50
    assert store.pending == []
    assert store.seal_partial(state) is None


def test_init_store_rejects_different_specs(tmp_path, net_xml, pkt_xml):
    init_store(tmp_path / "db", net_xml, pkt_xml)
    changed = net_xml.replace('LogPerCheckpoint="100"', 'LogPerCheckpoint="50"')
    with pytest.raises(StoreError):
        init_store(tmp_path / "db", changed, pkt_xml)


def test_checkpoint_xml_pass_through(store, sim_stream):
    state = NetworkState.empty()
    ingest(store, state, sim_stream(seed=2, count=100))
    t = store.checkpoints[0].t
    text = store.checkpoint_xml(t)
    assert text == serialize_checkpoint(store.checkpoints[0])


def test_open_store_requires_specs(tmp_path):
    (tmp_path / "empty").mkdir()
    with pytest.raises(StoreError):
        open_store(tmp_path / "empty")
