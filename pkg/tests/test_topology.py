import itertools

import numpy as np
import pandas as pd
import pytest
from hypothesis import given, settings, strategies as st

from posroute.analysis import mainnet_shaped_config
from posroute.topology import (
    HijackAction, HijackMode, HijackSchedule, MappingFormatError, Prefix,
    TopologyConfig, TopologyError, build_topology, export_mapping_csv, ingest_mapping_csv,
    rpki_exposure, topology_mapping, uniform_config,
)

NODES = dict(zip("ABCDEFG", range(7)))


@pytest.fixture(scope="module")
def seven():
    # eight ASes, the last holds the adversary and no nodes
    cfg = TopologyConfig(n_as=8, prefixes_per_as=[1] * 7 + [0], validators=14, placement="uniform",
                         seed=3)
    return build_topology(cfg)


def partition_abc(topo, start=0, end=100):
    pfx = {topo.nodes[NODES[c]].prefix_id for c in "ABC"}
    return HijackSchedule(topo, [HijackAction(pfx, start, end, HijackMode.PARTITION_DROP)])


class TestBuild:
    def test_uniform_exact(self):
        topo = build_topology(uniform_config(4, 100))
        assert topo.validators_per_prefix().tolist() == [25, 25, 25, 25]

    def test_deterministic(self):
        cfg = TopologyConfig(n_as=10, prefixes_per_as=2, n_nodes=40, validators=500, seed=11,
                             as_graph="hierarchy")
        a, b = build_topology(cfg), build_topology(cfg)
        assert np.array_equal(a.validator_node, b.validator_node)
        assert np.array_equal(a.as_links, b.as_links)
        assert [n.subscribed_topics for n in a.nodes] == [n.subscribed_topics for n in b.nodes]
        assert topology_mapping(a).equals(topology_mapping(b))

    def test_mainnet_shaped_top29(self):
        cfg = mainnet_shaped_config(total=106_366)
        topo = build_topology(cfg)
        per = np.sort(topo.validators_per_prefix())[::-1]
        assert per[:29].sum() / per.sum() >= 0.33

    def test_capacity(self):
        with pytest.raises(TopologyError):
            build_topology(TopologyConfig(n_as=2, validators=100, max_validators_per_node=10))

    def test_table_mismatch(self):
        with pytest.raises(TopologyError):
            build_topology(TopologyConfig(n_as=2, validators=10, placement="table",
                                          prefix_table=[3, 3]))

    def test_capacity_spill(self):
        topo = build_topology(TopologyConfig(n_as=5, n_nodes=20, validators=150,
                                             max_validators_per_node=10, seed=2))
        assert topo.node_validator_counts.max() <= 10
        assert topo.node_validator_counts.sum() == 150

    def test_prefix_length_bounds(self):
        with pytest.raises(TopologyError):
            Prefix("x", 1, length=33)

    def test_single_machine_rule(self):
        topo = build_topology(TopologyConfig(n_as=6, n_nodes=30, validators=300, seed=5))
        hosted = list(itertools.chain.from_iterable(n.hosted_validators for n in topo.nodes))
        assert sorted(hosted) == list(range(300))

    @settings(max_examples=25, deadline=None)
    @given(st.integers(1, 8), st.integers(0, 400), st.integers(0, 10_000))
    def test_conservation(self, n_as, validators, seed):
        topo = build_topology(TopologyConfig(n_as=n_as, prefixes_per_as=2, n_nodes=3 * n_as,
                                             validators=validators, seed=seed))
        assert topo.validators_per_prefix().sum() == validators
        m = topology_mapping(topo)
        assert m.groupby("prefix").size().sum() == validators

    def test_consecutive_batches(self):
        topo = build_topology(TopologyConfig(n_as=4, n_nodes=20, validators=800, seed=1))
        same = np.mean(topo.validator_node[1:] == topo.validator_node[:-1])
        assert same > 0.8


class TestConnectivity:
    def test_no_hijack(self, seven):
        sched = HijackSchedule(seven, [])
        assert all(sched.connectivity(a, b, 5) for a in range(7) for b in range(7))

    def test_walkthrough_partition(self, seven):
        sched = partition_abc(seven)
        assert not sched.connectivity(NODES["A"], NODES["G"], 1)
        assert sched.connectivity(NODES["A"], NODES["B"], 1)
        assert sched.connectivity(NODES["D"], NODES["F"], 1)
        assert sched.actions[0].partition_membership == frozenset({0, 1, 2})

    def test_proposer_drop_single_slot(self, seven):
        d = NODES["D"]
        sched = HijackSchedule(seven, [HijackAction({seven.nodes[d].prefix_id}, 2, 2,
                                                    HijackMode.PROPOSER_DROP)])
        assert not any(sched.connectivity(d, x, 2) for x in range(7) if x != d)
        assert all(sched.connectivity(d, x, 3) for x in range(7))
        assert sched.connectivity(NODES["A"], NODES["B"], 2)

    def test_locality_and_symmetry(self, seven):
        sched = partition_abc(seven)
        inside = set(range(3))
        r = sched.reachable(1)
        assert np.array_equal(r, r.T)
        for a in range(7):
            for b in range(7):
                if (a in inside) == (b in inside):
                    assert r[a, b]

    def test_partial_success(self):
        topo = build_topology(TopologyConfig(n_as=4, n_nodes=80, validators=80, seed=9))
        pfx = {topo.prefixes[0].prefix_id}
        sched = HijackSchedule(topo, [HijackAction(pfx, 0, 10, success_prob=0.5)])
        r = sched.reachable(0)
        assert np.array_equal(r, r.T)
        m = np.zeros(topo.n_nodes, bool)
        m[list(sched.actions[0].partition_membership)] = True
        cross = r[np.ix_(m, ~m)]
        assert 0.35 < cross.mean() < 0.65

    def test_invalid_action(self):
        with pytest.raises(TopologyError):
            HijackAction({"p"}, 5, 4)
        with pytest.raises(TopologyError):
            HijackAction(set(), 0, 1)

    def test_components(self, seven):
        labels = partition_abc(seven).components(1)
        assert len(set(labels[:3])) == 1 and len(set(labels[3:])) == 1
        assert labels[0] != labels[3]


class TestLatency:
    def chain(self):
        # four ASes in a row: 10, 20, 30 ms
        cfg = TopologyConfig(n_as=4, validators=4, placement="uniform", seed=0, jitter_mean_ms=5.0)
        topo = build_topology(cfg)
        topo.as_links = np.array([[0, 1, 10.0], [1, 2, 20.0], [2, 3, 30.0]])
        topo.__dict__.pop("as_distance", None)
        return topo

    def test_sums(self):
        topo = self.chain()
        assert topo.path_latency(0, 0) == 0
        assert topo.path_latency(0, 1) == 10
        assert topo.path_latency(0, 3) == 60
        j = topo.path_latency(0, 3, draw=7)
        assert j > 60 and j == topo.path_latency(0, 3, draw=7)
        assert j != topo.path_latency(0, 3, draw=8)

    def test_unreachable(self, seven):
        sched = partition_abc(seven)
        with pytest.raises(TopologyError):
            sched.path_latency(0, 6, 1)
        assert sched.path_latency(0, 6, 200) > 0


class TestMapping:
    def test_three_rows(self, tmp_path):
        p = tmp_path / "m.csv"
        p.write_text("validator_id,prefix,asn,rpki_status,country\n"
                     "0,1.0.0.0/24,64512,valid,US\n1,1.0.0.0/24,,no_roa,\n2,2.0.0.0/16,7,,DE\n")
        m = ingest_mapping_csv(p)
        assert len(m) == 3 and pd.isna(m.asn[1]) and m.country[1] == ""

    def test_duplicate(self, tmp_path):
        p = tmp_path / "m.csv"
        p.write_text("validator_id,prefix,asn,rpki_status,country\n0,a,1,valid,US\n0,b,1,valid,US\n")
        with pytest.raises(MappingFormatError, match="duplicate validator_id 0"):
            ingest_mapping_csv(p)

    def test_malformed_line_numbers(self, tmp_path):
        p = tmp_path / "m.csv"
        p.write_text("validator_id,prefix,asn,rpki_status,country\n0,a,1,valid,US\nx,b,1,valid,US\n"
                     "2,c,1,bogus,US\n3,d\n")
        with pytest.raises(MappingFormatError) as e:
            ingest_mapping_csv(p)
        msg = str(e.value)
        assert "line 3" in msg and "line 4" in msg and "line 5" in msg

    def test_round_trip(self, tmp_path):
        topo = build_topology(mainnet_shaped_config(total=50_000))
        m = topology_mapping(topo)
        p = tmp_path / "m.csv"
        export_mapping_csv(m, p)
        back = ingest_mapping_csv(p)
        assert back.equals(m)
        export_mapping_csv(back, tmp_path / "m2.csv")
        assert p.read_bytes() == (tmp_path / "m2.csv").read_bytes()


class TestRPKI:
    def test_all_valid(self):
        topo = build_topology(TopologyConfig(n_as=4, validators=10, rpki_shares=(1, 0, 0)))
        assert rpki_exposure(topo)["unprotected"] == 0

    def test_measured_label_shares(self):
        n = 10_000
        rpki = ["permissive_maxlength"] * 2698 + ["no_roa"] * 1387 + ["valid"] * (n - 4085)
        m = pd.DataFrame({"validator_id": range(n), "prefix": "p", "asn": 1, "rpki_status": rpki,
                          "country": "US"})
        r = rpki_exposure(m)
        assert r["permissive_maxlength"] == pytest.approx(0.2698)
        assert r["no_roa"] == pytest.approx(0.1387)
        assert r["unprotected"] == pytest.approx(0.4085)

    def test_split(self):
        cfg = TopologyConfig(n_as=4, validators=8, placement="uniform",
                             prefix_rpki=["valid", "valid", "permissive_maxlength", "no_roa"])
        assert rpki_exposure(build_topology(cfg))["unprotected"] == pytest.approx(0.5)
