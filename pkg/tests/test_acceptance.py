"""End-to-end acceptance checks, one test per criterion, each recording a PASS/FAIL line."""
import json
import math

import numpy as np
import pytest

from oracles import mainnet_losses_oracle
from posroute import analysis, econ
from posroute.cli import main
from posroute.econ import EconContext, GWEI_PER_ETH, hours_to_epochs
from posroute.inference import countermeasure_eval, gradient_check
from posroute.scenarios import run_devnet

MAINNET_N = 1_063_660


def within(x, ref, rel):
    return abs(x - ref) <= rel * abs(ref)


@pytest.fixture(scope="module")
def ctx():
    return EconContext(MAINNET_N)


@pytest.fixture(scope="module")
def mainnet_mapping():
    return analysis.mainnet_shaped_mapping(0)


def test_1_constants(acceptance, ctx):
    b = econ.base_reward(34_037_120 * GWEI_PER_ETH)
    c = econ.reward_components(ctx)
    comps = (c.r_source, c.r_target, c.r_head, c.r_proposer_avg, c.r_sync_avg)
    ok = b == 346 and comps == (2422, 4498, 2422, 1384, 346) and c.full_reward == 11_072
    acceptance(1, ok, f"base_reward={b} components={comps} sum={c.full_reward}")


def test_2_loss_polynomial(acceptance, ctx):
    ps = np.random.default_rng(0).random(1000)
    full = econ.reward_components(ctx).full_reward
    worst = max(abs(full - econ.expected_validator_reward(p, False, ctx) - (13148 * p - 2422 * p * p))
                for p in ps)
    leak_ok = all(econ.nonhijacked_loss_rate(p, True, ctx) == 1384 * p + 9342 for p in ps)
    acceptance(2, worst <= 1 and leak_ok, f"max polynomial gap {worst:.4f} Gwei, leak form exact={leak_ok}")


def test_3_penalties(acceptance, ctx):
    pen = econ.attestation_penalty(ctx)
    score, cum, series = 0, 0, []
    for _ in range(200):
        score = econ.inactivity_score_update(True, False, score)
        cum += econ.inactivity_penalty(score, 32 * GWEI_PER_ETH)
        series.append(cum)
    e = np.arange(1, 201)
    y = np.array(series, dtype=float)
    coef = np.polyfit(e, y, 2)
    resid = np.linalg.norm(y - np.polyval(coef, e)) / np.linalg.norm(y)
    weeks = econ.time_to_ejection(32 * GWEI_PER_ETH, ctx) * econ.EPOCH_MINUTES / 60 / 24 / 7
    ok = pen == 6920 and resid < 0.05 and 2.5 <= weeks <= 3.5
    acceptance(3, ok, f"attestation penalty {pen}, quadratic fit residual {resid:.2e}, ejection {weeks:.2f} weeks")


def test_4_attack_aggregates(acceptance, ctx, mainnet_mapping):
    lb = econ.aggregate_attack_losses(0.35, hours_to_epochs(2), ctx)
    ref = mainnet_losses_oracle(0.35, hours_to_epochs(2))
    e = lb.in_eth()
    got = (e["hijacked_penalties"], e["hijacked_missed_rewards"], e["nonhijacked_losses"])
    reference_ok = all(within(g, r, 0.3) for g, r in zip(got, (110.6, 61.8, 114.8)))
    oracle_ok = (lb.hijacked_missed_rewards, lb.hijacked_attestation_penalties,
                 lb.hijacked_inactivity_penalties, lb.nonhijacked_losses, lb.total) == \
        (ref["missed"], ref["att"], ref["inact"], ref["nonhij"], ref["total"])
    t20 = econ.aggregate_attack_losses(0.20, hours_to_epochs(2), ctx).in_eth()["total"]

    counts = mainnet_mapping["prefix"].value_counts().to_numpy()
    p30 = counts[:30].sum() / counts.sum()
    t30 = {h: econ.aggregate_attack_losses(p30, hours_to_epochs(h), ctx).in_eth()["total"] for h in (2, 3)}
    # the 3 h figure is quoted for the no-leak case
    t30_noleak = econ.aggregate_attack_losses(p30, hours_to_epochs(3), ctx, leak_enabled=False).in_eth()["total"]
    checks = {
        "p=0.35 within 30%": reference_ok,
        "oracle exact": oracle_ok,
        "p=0.20 2h vs 214": within(t20, 214, 0.3),
        "30-prefix 2h vs 300": within(t30[2], 300, 0.3),
        "30-prefix 3h no-leak vs 379": within(t30_noleak, 379, 0.3),
    }
    failed = [k for k, v in checks.items() if not v]
    detail = (f"p=0.35 2h (penalties, missed, non-hijacked) = ({got[0]:.1f}, {got[1]:.1f}, {got[2]:.1f}) ETH; "
              f"p=0.20 2h total {t20:.1f}; 30 prefixes (p={p30:.4f}) 2h {t30[2]:.1f}, "
              f"3h {t30_noleak:.1f} without leak ({t30[3]:.1f} with) ETH"
              + (f"; failing: {', '.join(failed)}" if failed else ""))
    acceptance(4, not failed, detail)


def test_5_knockblock(acceptance, ctx):
    one = econ.knockblock_block_reward([1], ctx)
    eight = econ.knockblock_block_reward(range(1, 9), ctx)
    prof = econ.knockblock_profitability(1, 2500, 4463, 2.47, 0.05, 0.03)
    profit = [econ.knockblock_profitability(n, 2500, 4463, 2.47, 0.05, 0.03).profit_usd for n in range(1, 8)]
    uplift_ok = math.floor(prof.annual_uplift_eth * 100) / 100 == 0.19
    # "profitable if more than 3 validators": every owner count above 3 is profitable
    breakeven_ok = all(x > 0 for x in profit[3:]) and profit[1] < 0 and prof.break_even_validators <= 3
    ok = within(one, 46_003_328, 1e-3) and within(eight, 254_674_423, 0.02) and uplift_ok and breakeven_ok
    acceptance(5, ok, f"single slot {one}, 8 slots {eight} (+{100 * (eight / one - 1):.1f}%), "
                      f"uplift {prof.annual_uplift_eth:.4f} ETH/yr, break-even {prof.break_even_validators:.2f} validators")


def test_6_devnet(acceptance):
    rep = run_devnet(seed=1)
    sus = run_devnet(seed=1, start_slot=64, end_slot=64 + 60 * 32 - 1, tail_epochs=20)
    ok = (rep.leak_delay == 4 and sus.leak_delay == 4
          and sus.partition_epochs >= 50 and abs(sus.missed_fraction - 0.37) <= 0.05
          and max(rep.hijacked_balance_error, rep.honest_balance_error) < 0.01
          and all(r.finality_resume_delay is not None and r.finality_resume_delay <= 2 for r in (rep, sus)))
    acceptance(6, ok, f"p={rep.p:.3f}, leak after {rep.leak_delay}/{sus.leak_delay} epochs, "
                      f"missed {sus.missed_fraction:.3f} over {sus.partition_epochs} epochs "
                      f"({rep.missed_fraction:.3f} over the {rep.partition_epochs}-epoch replication window), "
                      f"balance error {max(rep.hijacked_balance_error, rep.honest_balance_error):.2e}, "
                      f"finality resumes after {rep.finality_resume_delay}/{sus.finality_resume_delay} epochs")


def test_7_inference(acceptance, default_run):
    topo, traces, run = default_run
    grad = gradient_check(seed=0)
    size_ok = topo.n_nodes >= 200 and topo.n_validators >= 2000 and traces.epochs >= 20
    ok = (size_ok and run.top10_hit >= 0.95 and run.seed_coverage >= 0.5
          and run.shuffled_coverage < 0.1 * run.seed_coverage and run.accuracy >= 0.85 and grad < 1e-4)
    acceptance(7, ok, f"{topo.n_nodes} nodes, {topo.n_validators} validators, {traces.epochs} epochs; "
                      f"top-10 {run.top10_hit:.3f}, seeding {run.seed_coverage:.3f} vs shuffled "
                      f"{run.shuffled_coverage:.3f}, accuracy {run.accuracy:.3f}, gradient error {grad:.1e}")


def test_8_countermeasures(acceptance, default_run):
    topo, traces, run = default_run
    modes = ["none", ("add_latency", 50), ("add_latency", 200), ("add_latency", 500), "disable_eager_oos"]
    tab = countermeasure_eval(topo, modes, traces.epochs, 7, traces=traces).set_index("mode")
    pts = (100 * tab["delta"]).round(2)
    lat = pts[[m for m in pts.index if m.startswith("add_latency")]]
    ok = (lat.abs() <= 5).all() and pts["disable_eager_oos"] <= -40
    acceptance(8, ok, "accuracy change in points: " + ", ".join(f"{m} {v:+.2f}" for m, v in pts.items())
               + f" (baseline {tab.loc['none', 'accuracy']:.3f})")


def test_9_centralization(acceptance, mainnet_mapping):
    rep = analysis.centralization_report(mainnet_mapping)
    ases = analysis.min_groups_for_fraction(mainnet_mapping, 0.5 + 1e-9, "asn")
    third = analysis.top_share(mainnet_mapping, 29, "prefix")
    ok = (rep.prefixes_for_third == 29 and rep.share_top100_prefixes >= 0.55 and ases == 3
          and abs(rep.share_top1_as - 0.27) <= 0.02)
    acceptance(9, ok, f"29 prefixes hold {third:.4f} (minimum for a third: {rep.prefixes_for_third}), "
                      f"top 100 prefixes {rep.share_top100_prefixes:.3f}, {ases} ASes for a majority, "
                      f"top AS {rep.share_top1_as:.3f}")


def test_10_determinism(acceptance, tmp_path):
    runs = [("econ", None), ("simulate", None), ("analyze", None), ("attack-plan", None),
            ("attack-plan", {"kind": "knockblock"}), ("infer", None)]
    differ = []
    for i, (cmd, cfg) in enumerate(runs):
        trees = []
        for rep in "ab":
            out = tmp_path / f"{i}{rep}"
            argv = [cmd, "--seed", "5", "--out", str(out)]
            if cfg is not None:
                path = tmp_path / f"{i}.json"
                path.write_text(json.dumps(cfg))
                argv += ["--config", str(path)]
            assert main(argv) == 0
            trees.append({p.relative_to(out).as_posix(): p.read_bytes() for p in sorted(out.rglob("*"))
                          if p.is_file()})
        if not trees[0] or trees[0] != trees[1]:
            differ.append(cmd)
    acceptance(10, not differ, f"{len(runs)} command configurations rerun"
               + (f"; differing: {differ}" if differ else ", all outputs byte-identical"))
