"""Command line: econ, simulate, analyze, infer, attack-plan.

Each command reads an optional JSON config, derives all randomness from
``--seed``, and writes its outputs (plus metadata sidecars) under ``--out``.
Exit codes: 0 success, 2 configuration error, 3 runtime error.
"""
from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import pandas as pd

from . import adversary, analysis, curves, econ, io
from .consensus import ChainSimulator
from .gossip import countermeasure_transform
from .topology import (HijackAction, HijackMode, HijackSchedule, MappingFormatError, TopologyConfig,
                       TopologyError, build_topology, ingest_mapping_csv)

EXIT_OK, EXIT_CONFIG, EXIT_RUNTIME = 0, 2, 3


class ConfigError(ValueError):
    pass


def _load_config(path) -> dict:
    if path is None:
        return {}
    try:
        with open(path) as fh:
            cfg = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    if not isinstance(cfg, dict):
        raise ConfigError("config must be a JSON object")
    return cfg


def _check_keys(cfg: dict, allowed: set, where: str):
    extra = sorted(set(cfg) - allowed)
    if extra:
        raise ConfigError(f"unknown {where} keys: {', '.join(extra)}")


def _topology_config(d: dict | None, seed: int, default: TopologyConfig | None = None) -> TopologyConfig:
    if d is None:
        cfg = default or TopologyConfig()
        return TopologyConfig.from_dict({**cfg.to_dict(), "seed": seed})
    try:
        return TopologyConfig.from_dict({**d, "seed": seed})
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"bad topology config: {exc}") from exc


# ---------------------------------------------------------------- econ

ECON_KEYS = {"validators", "p", "hours", "delays", "profitability", "curves"}
CURVE_KEYS = {"p", "hours", "budgets", "budget_hours", "nonhijacked_hours", "inactivity_p"}


def cmd_econ(cfg, seed, out, fmt):
    _check_keys(cfg, ECON_KEYS, "econ")
    n = int(cfg.get("validators", 1_063_660))
    p = float(cfg.get("p", 0.35))
    hours = float(cfg.get("hours", 2.0))
    delays = list(cfg.get("delays", list(range(1, 9))))
    ctx = econ.EconContext(n)
    comps = econ.reward_components(ctx)
    losses = econ.aggregate_attack_losses(p, econ.hours_to_epochs(hours), ctx)
    res = {
        "validators": n,
        "base_reward": ctx.base_reward,
        "components": comps.__dict__ | {"full_reward": comps.full_reward},
        "attestation_penalty": econ.attestation_penalty(ctx),
        "loss": {"p": p, "hours": hours, "gwei": losses.__dict__, "eth": losses.in_eth()},
        "knockblock": {
            "single_slot_reward": econ.knockblock_block_reward([1], ctx),
            "delays": delays,
            "multi_slot_reward": econ.knockblock_block_reward(delays, ctx),
            "attack_damage": econ.knockblock_attack_damage(ctx),
        },
        "time_to_ejection_epochs": econ.time_to_ejection(32 * econ.GWEI_PER_ETH, ctx),
    }
    if "profitability" in cfg:
        try:
            res["profitability"] = econ.knockblock_profitability(**cfg["profitability"]).__dict__
        except TypeError as exc:
            raise ConfigError(f"bad profitability inputs: {exc}") from exc
    meta = io.sidecar(seed, cfg, "econ")
    loss_rows = pd.DataFrame([{"component": k, "eth": v} for k, v in losses.in_eth().items()])
    io.write_table(loss_rows, out, "losses", fmt, meta)
    cmd_econ_curves(cfg.get("curves", {}), ctx, out, fmt, meta)
    io.write_json({"meta": meta, **res}, Path(out) / "econ.json")
    return res


def cmd_econ_curves(ranges: dict, ctx, out, fmt, meta) -> dict:
    """Write the four sweep datasets; the budget sweep uses the heavy-head prefix distribution."""
    if not isinstance(ranges, dict):
        raise ConfigError("curves must be an object")
    _check_keys(ranges, CURVE_KEYS, "curves")
    counts = analysis.heavy_head_counts()  # only the shares matter
    try:
        tables = curves.econ_curves(ctx, counts, **ranges)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"bad curve range: {exc}") from exc
    for name, df in tables.items():
        io.write_table(df, out, name, fmt, meta)
    return tables


# ---------------------------------------------------------------- simulate

SIM_KEYS = {"scenario", "topology", "hijacks", "epochs"}


def _hijack_actions(specs, topo) -> list:
    out = []
    for i, h in enumerate(specs):
        _check_keys(h, {"prefixes", "nodes", "start", "end", "mode", "success_prob"}, f"hijack {i}")
        prefixes = set(h.get("prefixes", []))
        prefixes |= {topo.nodes[n].prefix_id for n in h.get("nodes", [])}
        try:
            out.append(HijackAction(prefixes, int(h["start"]), int(h["end"]),
                                    HijackMode(h.get("mode", "partition_drop")),
                                    float(h.get("success_prob", 1.0))))
        except (KeyError, ValueError, TopologyError) as exc:
            raise ConfigError(f"bad hijack {i}: {exc}") from exc
    return out


def cmd_simulate(cfg, seed, out, fmt):
    _check_keys(cfg, SIM_KEYS, "simulate")
    from .scenarios import DEVNET_HIJACK_SLOTS, DEVNET_TABLE
    scenario = cfg.get("scenario", "devnet")
    if scenario == "devnet":
        tcfg = TopologyConfig(n_as=len(DEVNET_TABLE), validators=sum(DEVNET_TABLE), placement="table",
                              prefix_table=DEVNET_TABLE, seed=seed)
        hijacks = cfg.get("hijacks", [{"nodes": [0, 1, 2], "start": DEVNET_HIJACK_SLOTS[0],
                                       "end": DEVNET_HIJACK_SLOTS[1]}])
        epochs = int(cfg.get("epochs", DEVNET_HIJACK_SLOTS[1] // 32 + 13))
    elif scenario == "custom":
        tcfg = _topology_config(cfg.get("topology"), seed)
        hijacks = cfg.get("hijacks", [])
        epochs = int(cfg.get("epochs", 10))
    else:
        raise ConfigError(f"unknown scenario {scenario!r}")
    if epochs < 1:
        raise ConfigError("duration must be at least one epoch")
    topo = build_topology(tcfg)
    sim = ChainSimulator(topo, HijackSchedule(topo, _hijack_actions(hijacks, topo), seed=seed), seed=seed)
    sim.run(epochs)
    meta = io.sidecar(seed, cfg, "simulate")
    io.write_table(sim.snapshot_frame(), out, "snapshots", fmt, meta)
    tl = sim.state.timeline()
    io.write_json({"meta": meta, **tl}, Path(out) / "timeline.json")
    spe = sim.params.slots_per_epoch
    summary = {
        "epochs": epochs, "validators": topo.n_validators,
        "throughput": len(sim.state.canonical_blocks) / (epochs * spe),
        "leak_epochs": len(sim.state.leak_epochs),
        "finalized_checkpoint": sim.state.finalized_checkpoint,
        "mean_balance_eth": float(sim.validators.balance.mean() / econ.GWEI_PER_ETH),
    }
    io.write_json({"meta": meta, **summary}, Path(out) / "summary.json")
    return summary


# ---------------------------------------------------------------- analyze

ANALYZE_KEYS = {"mapping", "synthetic", "total", "target_fraction"}


def _mapping_from(cfg, seed) -> pd.DataFrame:
    if cfg.get("mapping"):
        return ingest_mapping_csv(cfg["mapping"])
    kind = cfg.get("synthetic", "mainnet")
    if kind == "mainnet":
        return analysis.mainnet_shaped_mapping(seed, int(cfg.get("total", analysis.MAINNET_VALIDATORS)))
    if kind == "uniform":
        return analysis.uniform_mapping(10, int(cfg.get("total", 1000)) // 10)
    raise ConfigError(f"unknown synthetic mapping {kind!r}")


def cmd_analyze(cfg, seed, out, fmt):
    _check_keys(cfg, ANALYZE_KEYS, "analyze")
    mapping = _mapping_from(cfg, seed)
    if len(mapping) == 0:
        raise ConfigError("empty mapping")
    meta = io.sidecar(seed, cfg, "analyze")
    for col, name in (("prefix", "prefix_cdf"), ("asn", "as_cdf"), ("country", "country_cdf")):
        io.write_table(analysis.share_cdf(mapping, col), out, name, fmt, meta)
    rep = analysis.centralization_report(mapping).to_dict()
    frac = float(cfg.get("target_fraction", 1 / 3))
    rep["target_fraction"] = frac
    rep["prefixes_for_target"] = analysis.min_groups_for_fraction(mapping, frac, "prefix")
    rep["ases_over_half"] = analysis.min_groups_for_fraction(mapping, 0.5 + 1e-9, "asn")
    io.write_json({"meta": meta, **rep}, Path(out) / "report.json")
    return rep


# ---------------------------------------------------------------- infer

INFER_KEYS = {"topology", "epochs", "passes", "countermeasures", "threshold"}


def cmd_infer(cfg, seed, out, fmt):
    from . import inference as inf
    _check_keys(cfg, INFER_KEYS, "infer")
    epochs = int(cfg.get("epochs", 20))
    if epochs < 3:
        raise ConfigError(f"trace length {epochs} epochs is below the 3-epoch minimum")
    tcfg = _topology_config(cfg.get("topology"), seed, inf.default_network_config(seed))
    mcfg = inf.ModelConfig(passes=int(cfg.get("passes", 1000)))
    topo = build_topology(tcfg)
    traces = inf.generate_traces(topo, epochs, seed)
    run = inf.run_pipeline(topo, traces, seed=seed, model_config=mcfg,
                           threshold=float(cfg.get("threshold", 0.2)))
    meta = io.sidecar(seed, cfg, "infer")
    out = Path(out)
    cands = run.candidates.to_frame()
    io.write_table(cands, out, "candidates", fmt, meta)
    seeds = run.seeds.rename("prefix_index").reset_index()
    io.write_table(seeds, out, "seeds", fmt, meta)
    io.write_table(inf.result_mapping(run.result, topo), out, "mapping_result", fmt, meta)
    io.write_table(run.result, out, "mapping_scores", fmt, meta)
    alt = run.alt
    io.write_table(alt, out, "alt_heuristic", fmt, meta)
    if run.model is not None:
        run.model.save(out / "model.bin")
    modes = [m if isinstance(m, str) else tuple(m) for m in cfg.get("countermeasures", ["none"])]
    for m in modes:
        try:
            countermeasure_transform(traces.records.head(0), m)
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc
    table = inf.countermeasure_eval(topo, modes, epochs, seed, mcfg, traces=traces)
    io.write_table(table, out, "accuracy", fmt, meta)
    metrics = {
        "accuracy": run.accuracy, "top10_hit": run.top10_hit,
        "seed_coverage": run.seed_coverage, "shuffled_coverage": run.shuffled_coverage,
        **{k: v for k, v in run.metrics.items()},
    }
    io.write_json({"meta": meta, **metrics}, out / "metrics.json")
    return metrics


# ---------------------------------------------------------------- attack-plan

ATTACK_KEYS = {"kind", "mapping", "synthetic", "total", "target_fraction", "hours", "own_validator",
               "lead_time_slots", "execute", "success_prob"}


def cmd_attack_plan(cfg, seed, out, fmt):
    _check_keys(cfg, ATTACK_KEYS, "attack-plan")
    kind = cfg.get("kind", "stakebleed")
    meta = io.sidecar(seed, cfg, "attack-plan")
    if kind == "stakebleed":
        mapping = _mapping_from(cfg, seed)
        frac = float(cfg.get("target_fraction", 1 / 3))
        hours = float(cfg.get("hours", 2.0))
        sel = adversary.stakebleed_select_prefixes(mapping, frac)
        ctx = econ.EconContext(len(mapping))
        losses = adversary.stakebleed_report(sel.achieved_fraction, hours, ctx)
        rep = {"kind": kind, "prefixes": sel.prefixes, "achieved_fraction": sel.achieved_fraction,
               "hours": hours, "active_hijack_seconds": int(hours * 3600), "losses_eth": losses.in_eth(),
               "leak_triggered": losses.leak_triggered}
        io.write_table(pd.DataFrame({"prefix": sel.prefixes, "validators": sel.counts}), out,
                       "selected_prefixes", fmt, meta)
    elif kind == "knockblock":
        from .scenarios import devnet_topology
        topo = devnet_topology(seed)
        sim = ChainSimulator(topo, seed=seed)
        scheds = [sim.schedule_for(e) for e in range(2)]
        own = cfg.get("own_validator")
        if own is None:
            own = scheds[1].proposers[len(scheds[1].proposers) // 2]
        mapping = {v: topo.nodes[topo.validator_node[v]].prefix_id for v in range(topo.n_validators)}
        try:
            plan = adversary.knockblock_plan(scheds, int(own), mapping,
                                             int(cfg.get("lead_time_slots", adversary.DEFAULT_LEAD_SLOTS)),
                                             after_slot=1)
        except adversary.PlanError as exc:
            raise ConfigError(str(exc)) from exc
        rep = {"kind": kind, "target_slot": plan.target_slot, "target_validator": plan.target_validator,
               "own_slot": plan.own_slot, "prefixes": sorted(plan.prefixes),
               "lead_time_slots": plan.lead_time_slots, "active_hijack_seconds": plan.active_hijack_seconds()}
        if cfg.get("execute", True):
            res = adversary.execute_knockblock(plan, topo, seed=seed,
                                               success_prob=float(cfg.get("success_prob", 1.0)))
            rep["outcome"] = {k: v for k, v in res.report().items() if k != "plan"}
    else:
        raise ConfigError(f"unknown attack kind {kind!r}")
    io.write_json({"meta": meta, **rep}, Path(out) / "plan.json")
    return rep


COMMANDS = {"econ": cmd_econ, "simulate": cmd_simulate, "analyze": cmd_analyze, "infer": cmd_infer,
            "attack-plan": cmd_attack_plan}


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="posroute", description=__doc__.splitlines()[0])
    sub = ap.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", type=Path, help="JSON config file")
        p.add_argument("--seed", type=int, default=0)
        p.add_argument("--out", type=Path, default=Path("out"))
        p.add_argument("--format", choices=["csv", "json"], default="csv")
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.seed < 0 or args.seed >= 2**64:
            raise ConfigError("seed must be an unsigned 64-bit integer")
        cfg = _load_config(args.config)
        args.out.mkdir(parents=True, exist_ok=True)
        COMMANDS[args.command](cfg, args.seed, args.out, args.format)
    except (ConfigError, MappingFormatError, TopologyError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except Exception as exc:  # noqa: BLE001 - report anything else as a runtime failure
        print(f"runtime error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
