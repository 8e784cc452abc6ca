"""Figure-style datasets from the econ model: sweeps over p, duration and prefix budget."""
from __future__ import annotations

import numpy as np
import pandas as pd

from . import econ

DEFAULT_P = [round(0.05 * i, 2) for i in range(21)]
DEFAULT_HOURS = [0.5 * i for i in range(13)]
DEFAULT_BUDGETS = [1, 5, 10, 20, 29, 30, 40, 50, 75, 100]

REWARD_COLS = ["p", "leak", "expected_reward_gwei_per_epoch", "reward_fraction", "loss_gwei_per_epoch"]
INACTIVITY_COLS = ["hours", "epochs", "leak_epochs", "inactivity_penalty_gwei", "attestation_penalty_gwei"]
NONHIJ_COLS = ["p", "hours", "leak", "nonhijacked_losses_eth", "total_eth"]
BUDGET_COLS = ["prefixes", "p", "hours", "leak", "hijacked_eth", "nonhijacked_losses_eth", "total_eth",
               "total_no_leak_eth"]


class RangeError(ValueError):
    pass


def _check_p(values) -> list:
    out = [float(p) for p in values]
    bad = [p for p in out if not 0.0 <= p <= 1.0]
    if bad:
        raise RangeError(f"p values outside [0, 1]: {bad}")
    return out


def _check_hours(values) -> list:
    out = [float(h) for h in values]
    if any(h < 0 for h in out):
        raise RangeError("durations must be non-negative")
    return out


def reward_vs_p(ps, ctx: econ.EconContext) -> pd.DataFrame:
    full = econ.reward_components(ctx).full_reward
    rows = []
    for p in _check_p(ps):
        for leak in (False, True):
            r = econ.expected_validator_reward(p, leak, ctx)
            rows.append((p, leak, r, r / full if full else 0.0, econ.nonhijacked_loss_rate(p, leak, ctx)))
    return pd.DataFrame(rows, columns=REWARD_COLS)


def inactivity_vs_length(hours, ctx: econ.EconContext, p: float = 0.35) -> pd.DataFrame:
    """Per-hijacked-validator penalties for a partition of fraction ``p`` held for each duration."""
    hijacked = max(econ.resolve_hijacked_count(_check_p([p])[0], ctx.validator_count), 1)
    rows = []
    for h in _check_hours(hours):
        ep = econ.hours_to_epochs(h, ctx.params)
        lb = econ.aggregate_attack_losses(p, ep, ctx)
        leak_ep = 0.0 if lb.leak_start_epoch is None else max(ep - lb.leak_start_epoch, 0.0)
        rows.append((h, ep, leak_ep, lb.hijacked_inactivity_penalties // hijacked,
                     lb.hijacked_attestation_penalties // hijacked))
    return pd.DataFrame(rows, columns=INACTIVITY_COLS)


def nonhijacked_vs_p(ps, hours: float, ctx: econ.EconContext) -> pd.DataFrame:
    ep = econ.hours_to_epochs(_check_hours([hours])[0], ctx.params)
    rows = []
    for p in _check_p(ps):
        lb = econ.aggregate_attack_losses(p, ep, ctx)
        e = lb.in_eth()
        rows.append((p, hours, lb.leak_triggered, e["nonhijacked_losses"], e["total"]))
    return pd.DataFrame(rows, columns=NONHIJ_COLS)


def losses_vs_budget(budgets, hours, prefix_counts, ctx: econ.EconContext) -> pd.DataFrame:
    """Losses when the ``k`` largest prefixes are hijacked, for each budget and duration."""
    counts = np.sort(np.asarray(prefix_counts, dtype=np.int64))[::-1]
    total = int(counts.sum())
    cum = np.concatenate([[0], np.cumsum(counts)])
    hs = _check_hours(hours)
    rows = []
    for k in budgets:
        k = int(k)
        if k < 0:
            raise RangeError("prefix budget must be non-negative")
        p = float(cum[min(k, len(counts))] / total) if total else 0.0
        for h in hs:
            ep = econ.hours_to_epochs(h, ctx.params)
            lb = econ.aggregate_attack_losses(p, ep, ctx)
            e = lb.in_eth()
            no_leak = econ.aggregate_attack_losses(p, ep, ctx, leak_enabled=False).total / econ.GWEI_PER_ETH
            rows.append((k, p, h, lb.leak_triggered, e["total"] - e["nonhijacked_losses"],
                         e["nonhijacked_losses"], e["total"], no_leak))
    return pd.DataFrame(rows, columns=BUDGET_COLS)


def econ_curves(ctx: econ.EconContext, prefix_counts, p=None, hours=None, budgets=None,
                budget_hours=None, nonhijacked_hours: float = 2.0, inactivity_p: float = 0.35) -> dict:
    p = DEFAULT_P if p is None else p
    hours = DEFAULT_HOURS if hours is None else hours
    budgets = DEFAULT_BUDGETS if budgets is None else budgets
    budget_hours = [1.0, 2.0, 3.0] if budget_hours is None else budget_hours
    return {
        "reward_vs_p": reward_vs_p(p, ctx),
        "inactivity_vs_length": inactivity_vs_length(hours, ctx, inactivity_p),
        "nonhijacked_vs_p": nonhijacked_vs_p(p, nonhijacked_hours, ctx),
        "losses_vs_budget": losses_vs_budget(budgets, budget_hours, prefix_counts, ctx),
    }
