import itertools
import json

import numpy as np
import pandas as pd
import pytest

from oracles import mainnet_losses_oracle
from posroute.adversary import (
    AttackKind, PlanError, daily_damage, execute, execute_knockblock, execute_stakebleed,
    knockblock_plan, report_json, stakebleed_monitor_and_expand, stakebleed_plan, stakebleed_report,
    stakebleed_select_prefixes,
)
from posroute.analysis import mainnet_shaped_config
from posroute.consensus import ChainSimulator, ProposerSchedule
from posroute.econ import EconContext, hours_to_epochs, knockblock_block_reward
from posroute.rng import rng_for
from posroute.scenarios import devnet_topology, node_of, walkthrough_topology
from posroute.topology import TopologyConfig, build_topology

MAINNET_N = 1_063_660


def counts(**kw):
    return pd.Series(kw)


@pytest.fixture(scope="module")
def mainnet():
    topo = build_topology(mainnet_shaped_config(total=106_366))
    return pd.Series(topo.validators_per_prefix(), index=[p.prefix_id for p in topo.prefixes])


class TestSelection:
    def test_50_30_20(self):
        sel = stakebleed_select_prefixes(counts(a=50, b=30, c=20), 0.6)
        assert sel.prefixes == ["a", "b"] and sel.achieved_fraction == 0.8

    def test_greedy_is_minimal_here(self):
        c = counts(a=50, b=30, c=20)
        k = len(stakebleed_select_prefixes(c, 0.6).prefixes)
        best = min(len(s) for r in range(1, 4) for s in itertools.combinations(c.index, r)
                   if c[list(s)].sum() >= 60)
        assert k == best

    def test_zero_and_infeasible(self):
        assert stakebleed_select_prefixes(counts(a=5), 0).prefixes == []
        with pytest.raises(PlanError):
            stakebleed_select_prefixes(counts(a=5, b=5), 0.6, total=20)
        with pytest.raises(PlanError):
            stakebleed_select_prefixes(counts(a=5), 1.5)

    def test_mapping_frame_input(self):
        m = pd.DataFrame({"prefix": ["x"] * 3 + ["y"] * 7})
        assert stakebleed_select_prefixes(m, 0.5).prefixes == ["y"]

    def test_mainnet_shaped_29(self, mainnet):
        sel = stakebleed_select_prefixes(mainnet, 1 / 3)
        assert len(sel.prefixes) == 29

    def test_greedy_dominance(self, mainnet):
        sel = stakebleed_select_prefixes(mainnet, 1 / 3)
        inside = mainnet[sel.prefixes]
        outside = mainnet.drop(sel.prefixes)
        assert outside.max() <= inside.min()
        assert list(inside) == sorted(inside, reverse=True)


@pytest.fixture(scope="module")
def walk():
    return walkthrough_topology()


def walk_mapping(topo):
    return {v: topo.nodes[topo.validator_node[v]].prefix_id for v in range(topo.n_validators)}


def on_node(topo, label, k=0):
    return int(np.flatnonzero(topo.validator_node == node_of(label))[k])


class TestKnockblockPlan:
    def test_walkthrough(self, walk):
        d, own = on_node(walk, "D"), on_node(walk, "A")
        props = [on_node(walk, "B"), on_node(walk, "C"), d, own] + [on_node(walk, "E")] * 28
        plan = knockblock_plan(ProposerSchedule(0, tuple(props)), own, walk_mapping(walk))
        assert plan.kind == AttackKind.KNOCKBLOCK
        assert plan.target_slot == 2 and plan.own_slot == 3 and plan.target_validator == d
        assert plan.prefixes == {walk.nodes[node_of("D")].prefix_id}
        a = plan.hijack_actions[0]
        assert a.start == a.end == 2
        assert plan.active_hijack_seconds() == (1 + 8) * 12

    def test_epoch_boundary(self, walk):
        own = on_node(walk, "A")
        last = on_node(walk, "G")
        e0 = ProposerSchedule(0, tuple([on_node(walk, "B")] * 31 + [last]))
        e1 = ProposerSchedule(1, tuple([own] + [on_node(walk, "C")] * 31))
        plan = knockblock_plan([e0, e1], own, walk_mapping(walk))
        assert plan.own_slot == 32 and plan.target_slot == 31 and plan.target_validator == last

    def test_fallback_three_back(self, walk):
        own = on_node(walk, "A")
        x, y, z = on_node(walk, "B"), on_node(walk, "C"), on_node(walk, "D")
        props = [on_node(walk, "E")] * 5 + [z, y, x, own] + [on_node(walk, "F")] * 23
        mapping = walk_mapping(walk)
        del mapping[x], mapping[y]
        plan = knockblock_plan(ProposerSchedule(0, tuple(props)), own, mapping)
        assert plan.target_slot == 5 and plan.target_validator == z
        assert plan.expected_delays == [1, 2, 3]

    def test_hedges_and_lead(self, walk):
        d, own = on_node(walk, "D"), on_node(walk, "A")
        props = [d, own] + [on_node(walk, "E")] * 30
        plan = knockblock_plan(ProposerSchedule(0, tuple(props)), own, walk_mapping(walk),
                               lead_time_slots=3, hedges={d: ["h1", "h2"]})
        assert plan.hedge_prefixes == ["h1", "h2"]
        assert len(plan.hijack_actions) == 1
        assert plan.active_hijack_seconds() == 4 * 12

    def test_errors(self, walk):
        own = on_node(walk, "A")
        sched = ProposerSchedule(0, tuple([on_node(walk, "B")] * 32))
        with pytest.raises(PlanError):
            knockblock_plan(sched, own, walk_mapping(walk))
        props = [on_node(walk, "B")] * 10 + [own] + [on_node(walk, "B")] * 21
        with pytest.raises(PlanError):
            knockblock_plan(ProposerSchedule(0, tuple(props)), own, {})


@pytest.fixture(scope="module")
def devnet_plan():
    topo = devnet_topology(1)
    sim = ChainSimulator(topo, seed=1)
    scheds = [sim.schedule_for(e) for e in range(2)]
    own = scheds[1].proposers[10]
    mapping = {v: topo.nodes[topo.validator_node[v]].prefix_id for v in range(topo.n_validators)}
    return topo, knockblock_plan(scheds, own, mapping, after_slot=33)


class TestKnockblockExecute:
    def test_success_absorbs_delays(self, devnet_plan):
        topo, plan = devnet_plan
        out = execute_knockblock(plan, topo, seed=1, baseline_mev_eth=0.05)
        assert out.target_missed
        assert out.attacker_reward_gwei > out.baseline_reward_gwei
        assert 2 in out.absorbed_delays
        assert out.mev_uplift_eth == pytest.approx(0.05 * 0.445)
        assert out.active_hijack_seconds <= (1 + plan.lead_time_slots) * 12
        json.loads(report_json(out.report()))

    def test_failed_hijack_is_noop(self, devnet_plan):
        topo, plan = devnet_plan
        out = execute(plan, topo, seed=1, success_prob=0.0)
        assert not out.target_missed
        assert out.attacker_reward_gwei == out.baseline_reward_gwei
        assert out.mev_uplift_eth == 0

    def test_mainnet_scale_block_reward(self):
        ctx = EconContext(MAINNET_N)
        base = knockblock_block_reward([1], ctx)
        assert base == pytest.approx(46_003_328, rel=1e-3)
        assert knockblock_block_reward([1, 2], ctx) > base


@pytest.fixture(scope="module")
def bleed_net():
    topo = build_topology(TopologyConfig(n_as=20, prefixes_per_as=2, n_nodes=80, validators=2000, seed=4))
    names = np.array([p.prefix_id for p in topo.prefixes])
    return topo, names, topo.validator_prefix()


def bleed_inputs(bleed_net, wrong_share):
    topo, names, truth = bleed_net
    rng = rng_for(4, "mis")
    pred = truth.copy()
    wrong = rng.random(len(pred)) < wrong_share
    pred[wrong] = rng.integers(len(names), size=wrong.sum())
    predicted = pd.Series(names[pred])
    cands = {v: [names[pred[v]], names[truth[v]]] for v in range(len(pred))}
    return predicted, cands, pd.DataFrame({"prefix": names[pred]})


class TestStakebleed:
    def test_perfect_mapping_unchanged(self, bleed_net):
        predicted, cands, mapping = bleed_inputs(bleed_net, 0.0)
        plan = stakebleed_plan(mapping, 1 / 3, 64, 64 + 10 * 32 - 1)
        out = execute_stakebleed(plan, bleed_net[0], predicted, cands, seed=4)
        assert out.plan.hijack_actions == plan.hijack_actions
        assert all(len(x) == 0 for x in out.leaking)
        assert min(out.isolation) >= 1 / 3

    def test_mis_mapping_recovers(self, bleed_net):
        predicted, cands, mapping = bleed_inputs(bleed_net, 0.1)
        plan = stakebleed_plan(mapping, 1 / 3, 64, 64 + 10 * 32 - 1)
        out = execute_stakebleed(plan, bleed_net[0], predicted, cands, seed=4)
        assert len(out.plan.hijack_actions) > len(plan.hijack_actions)
        assert len(out.leaking[1]) < len(out.leaking[0])
        assert all(x >= 1 / 3 for x in out.isolation[2:])
        # the hijacked side never outgrows the canonical one
        assert max(out.isolation) < 0.5

    def test_partial_success_hedges_until_quiet(self, bleed_net):
        predicted, cands, mapping = bleed_inputs(bleed_net, 0.0)
        plan = stakebleed_plan(mapping, 1 / 3, 64, 64 + 10 * 32 - 1, success_prob=0.5)
        out = execute_stakebleed(plan, bleed_net[0], predicted, cands, seed=4, hedge=True)
        assert out.plan.hedge_prefixes
        assert len(out.leaking[0]) > 0 and len(out.leaking[-1]) == 0

    def test_unresolved_reported(self):
        plan = stakebleed_plan(counts(a=5, b=5), 0.5, 0, 31)
        new = stakebleed_monitor_and_expand(plan, [3], {3: ["a"]}, 32)
        assert new.hijack_actions == plan.hijack_actions   # boundary past the end
        new = stakebleed_monitor_and_expand(plan, [3], {3: ["a"]}, 16)
        assert new.events[-1]["unresolved"] == [3]

    def test_start_must_be_epoch_aligned(self, bleed_net):
        predicted, cands, mapping = bleed_inputs(bleed_net, 0.0)
        with pytest.raises(PlanError):
            execute_stakebleed(stakebleed_plan(mapping, 1 / 3, 10, 100), bleed_net[0], predicted)

    def test_report_matches_oracle(self):
        ctx = EconContext(MAINNET_N)
        lb = stakebleed_report(0.35, 2, ctx)
        ref = mainnet_losses_oracle(0.35, hours_to_epochs(2))
        assert lb.hijacked_missed_rewards == ref["missed"]
        assert lb.hijacked_attestation_penalties == ref["att"]
        assert lb.hijacked_inactivity_penalties == ref["inact"]
        assert lb.nonhijacked_losses == ref["nonhij"]
        assert lb.total == ref["total"]


class TestCampaign:
    def test_daily_damage_both_exceed_800(self):
        d = daily_damage(EconContext(MAINNET_N), 0.3345)
        assert d["knockblock_attacks"] == 7200
        assert d["knockblock_eth"] > 800 and d["stakebleed_eth"] > 800
