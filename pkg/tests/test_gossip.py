import numpy as np
import pandas as pd
import pytest
from hypothesis import given, settings, strategies as st

from posroute.consensus import committee_assignment
from posroute.gossip import (
    Channel, GossipMessage, GossipParams, HeartbeatSchedule, MessageKind, Overlay,
    attestation_traces, countermeasure_transform, heartbeat_schedule, propagate,
)
from posroute.topology import HijackAction, HijackMode, HijackSchedule, TopologyConfig, build_topology


@pytest.fixture(scope="module")
def topo():
    return build_topology(TopologyConfig(n_as=6, prefixes_per_as=1, n_nodes=30, validators=200, seed=2))


@pytest.fixture(scope="module")
def overlay(topo):
    return Overlay(topo)


def topic_for(overlay, node, subscribed):
    return next(k for k in range(64) if overlay.subscribed[node, k] == subscribed)


def msg(mid, topic, origin, slot=5, delay=0.0):
    return GossipMessage(mid, MessageKind.ATTESTATION, topic, origin, slot, slot * 12000 + 4000.0 + delay, 0)


@pytest.fixture(scope="module")
def traces(topo):
    active = np.ones(topo.n_validators, dtype=bool)
    return attestation_traces(topo, lambda e: committee_assignment(1, e, active), 4, seed=5)


class TestPropagate:
    def test_single_hop_mesh(self, topo, overlay):
        t = topic_for(overlay, 1, True)
        m = msg(1, t, 1)
        recs = propagate(m, topo, overlay=overlay)
        direct = [r for r in recs if r.sender_node == 1]
        assert direct
        lat = topo.base_latency_matrix()
        for r in direct:
            assert r.channel == Channel.MESH
            extra = r.rx_ts - m.origin_ts - lat[1, r.receiver_node]
            # only the per-hop jitter remains
            assert 0 <= extra < 20 * topo.jitter_means()[r.receiver_node]

    def test_unsubscribed_origin_uses_fanout(self, topo, overlay):
        t = topic_for(overlay, 0, False)
        recs = propagate(msg(2, t, 0), topo, overlay=overlay)
        fo = [r for r in recs if r.channel == Channel.FANOUT]
        assert fo
        assert all(r.sender_node == 0 and not r.sender_subscribed for r in fo)
        assert len(fo) <= GossipParams().fanout_size

    def test_partitioned_receiver_gets_nothing(self, topo, overlay):
        t = topic_for(overlay, 1, True)
        victim = next(r.receiver_node for r in propagate(msg(3, t, 1), topo, overlay=overlay)
                      if topo.nodes[r.receiver_node].prefix_id != topo.nodes[1].prefix_id)
        sched = HijackSchedule(topo, [HijackAction({topo.nodes[victim].prefix_id}, 0, 100,
                                                   HijackMode.PARTITION_DROP)])
        recs = propagate(msg(3, t, 1), topo, sched, overlay=overlay)
        assert victim not in {r.receiver_node for r in recs}

    def test_ihave_records_wait_for_heartbeat(self, topo, overlay):
        hb = heartbeat_schedule(GossipParams())
        for k in range(64):
            for r in propagate(msg(100 + k, k, 0), topo, overlay=overlay):
                if r.channel == Channel.IHAVE:
                    assert r.previously_advertised
                    assert r.rx_ts >= hb.next_boundary(msg(0, k, 0).origin_ts)


class TestHeartbeat:
    def test_ceiling(self):
        hb = heartbeat_schedule(GossipParams())
        assert hb.next_boundary(350.0) == 1000.0

    def test_exact_boundary(self):
        assert HeartbeatSchedule(1000.0).next_boundary(2000.0) == 2000.0

    def test_batching(self):
        hb = HeartbeatSchedule(1000.0)
        assert hb.batch_index(1100.0) == hb.batch_index(1900.0)
        assert hb.batch_index(1900.0) != hb.batch_index(2100.0)

    def test_rejects_nonpositive(self):
        with pytest.raises(ValueError):
            GossipParams(heartbeat_ms=0)


class TestCountermeasures:
    def test_none_is_identity(self, traces):
        out = countermeasure_transform(traces.records, "none")
        pd.testing.assert_frame_equal(out, traces.records)

    def test_add_latency_mean(self):
        n = 10_000
        rec = pd.DataFrame({"message_id": np.arange(n), "rx_ms": np.zeros(n), "sender_rx_ms": np.zeros(n)})
        out = countermeasure_transform(rec, ("add_latency", 500), seed=3)
        assert out["rx_ms"].mean() == pytest.approx(500, rel=0.05)

    def test_add_latency_shared_per_message(self, traces):
        out = countermeasure_transform(traces.records, ("add_latency", 50), seed=1)
        shift = out["rx_ms"] - traces.records["rx_ms"]
        spread = shift.groupby(traces.records["message_id"]).agg(lambda x: x.max() - x.min())
        assert (spread < 1e-6).all()

    def test_invalid_mean(self, traces):
        with pytest.raises(ValueError):
            countermeasure_transform(traces.records, ("add_latency", 0))
        with pytest.raises(ValueError):
            countermeasure_transform(traces.records, "bogus")

    def test_disable_eager_oos(self, traces):
        out = countermeasure_transform(traces.records, "disable_eager_oos")
        assert not out["channel"].isin([Channel.MESH.value, Channel.FANOUT.value]).any()
        assert out["previously_advertised"].all()

    @pytest.mark.parametrize("mode", ["none", ("add_latency", 50), ("add_latency", 500), "disable_eager_oos"])
    def test_never_earlier(self, traces, mode):
        rec = traces.records.set_index(["message_id", "sender"])
        out = countermeasure_transform(traces.records, mode, seed=2).set_index(["message_id", "sender"])
        assert (out["rx_ms"] >= rec.loc[out.index, "rx_ms"] - 1e-9).all()


class TestProperties:
    def test_causality(self, traces):
        r = traces.records
        assert (r["rx_ms"] >= r["origin_ts"]).all()
        assert (r["origin_ts"] >= r["slot"] * 12000).all()

    def test_fanout_never_subscribed(self, traces):
        r = traces.records
        assert not r.loc[r["channel"] == Channel.FANOUT.value, "sender_subscribed"].any()

    def test_determinism(self, topo):
        active = np.ones(topo.n_validators, dtype=bool)
        a = attestation_traces(topo, lambda e: committee_assignment(1, e, active), 3, seed=9)
        b = attestation_traces(topo, lambda e: committee_assignment(1, e, active), 3, seed=9)
        pd.testing.assert_frame_equal(a.records, b.records)

    def test_source_advantage(self, topo, overlay):
        origin = 1
        lat = {1: [], 2: []}
        for i in range(120):
            t = i % 64
            if not overlay.subscribed[origin, t]:
                continue
            recs = propagate(msg(1000 + i, t, origin, slot=i), topo, overlay=overlay, seed=4)
            e = overlay.mesh_edges(t)
            nb = set(e[e[:, 0] == origin, 1]) | set(e[e[:, 1] == origin, 0])
            for r in recs:
                if r.channel != Channel.MESH:
                    continue
                hop = 1 if r.receiver_node in nb else 2
                lat[hop].append(r.rx_ts - i * 12000)
        assert len(lat[1]) >= 100
        assert np.median(lat[1]) < np.median(lat[2])

    @settings(max_examples=15, deadline=None)
    @given(st.integers(0, 29), st.integers(0, 63), st.integers(0, 5))
    def test_partition_consistency(self, topo, overlay, origin, topic, pidx):
        pfx = topo.prefixes[pidx].prefix_id
        sched = HijackSchedule(topo, [HijackAction({pfx}, 0, 50, HijackMode.PARTITION_DROP)])
        inside = np.array([n.prefix_id == pfx for n in topo.nodes])
        for r in propagate(msg(7, topic, origin), topo, sched, overlay=overlay):
            assert inside[r.sender_node] == inside[origin]
            assert inside[r.receiver_node] == inside[origin]
