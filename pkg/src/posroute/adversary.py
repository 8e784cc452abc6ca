"""Attack planning and execution: prefix partitions that bleed stake through
the inactivity leak, and single-slot proposer knockouts that let the next
proposer absorb the missed block's attestations."""
from __future__ import annotations

import enum
import json
from dataclasses import asdict, dataclass, field

import numpy as np
import pandas as pd

from .consensus import ChainSimulator, ProposerSchedule
from .econ import (EconContext, GWEI_PER_ETH, LossBreakdown, aggregate_attack_losses, hours_to_epochs,
                   knockblock_attack_damage)
from .topology import HijackAction, HijackMode, HijackSchedule, Topology

SLOT_SECONDS = 12
DEFAULT_LEAD_SLOTS = 8
FALLBACK_SLOTS = 7
MEV_MULTIPLIER = 1.445


class AttackKind(str, enum.Enum):
    STAKEBLEED = "stakebleed"
    KNOCKBLOCK = "knockblock"


class PlanError(ValueError):
    pass


@dataclass
class PrefixSelection:
    prefixes: list
    achieved_fraction: float
    counts: list


@dataclass
class AttackPlan:
    kind: AttackKind
    hijack_actions: list
    target_fraction: float | None = None
    target_slot: int | None = None
    target_validator: int | None = None
    own_validator: int | None = None
    own_slot: int | None = None
    lead_time_slots: int = DEFAULT_LEAD_SLOTS
    hedge_prefixes: list = field(default_factory=list)
    mapping_source: str | None = None
    expected_delays: list = field(default_factory=list)
    events: list = field(default_factory=list)

    @property
    def prefixes(self) -> set:
        out = set()
        for a in self.hijack_actions:
            out |= set(a.prefixes)
        return out

    def active_hijack_seconds(self) -> int:
        """Announced time: enforcement slots plus the lead before each action."""
        lead = self.lead_time_slots if self.kind == AttackKind.KNOCKBLOCK else 0
        return sum((a.end - a.start + 1 + lead) * SLOT_SECONDS for a in self.hijack_actions)


# ---------------------------------------------------------------- stakebleed

def _prefix_counts(mapping) -> pd.Series:
    if isinstance(mapping, pd.Series):
        counts = mapping.astype(np.int64)
    else:
        counts = mapping.groupby("prefix").size()
    # densest first; the prefix name breaks ties so the order is stable
    df = pd.DataFrame({"prefix": counts.index.astype(str), "n": counts.to_numpy()})
    df = df.sort_values(["n", "prefix"], ascending=[False, True], kind="stable")
    return pd.Series(df["n"].to_numpy(), index=df["prefix"].to_numpy())


def stakebleed_select_prefixes(mapping, target_fraction: float, total: int | None = None) -> PrefixSelection:
    """Greedy densest-first prefix set covering ``target_fraction`` of validators.

    ``mapping`` is a validator mapping frame (one row per validator) or a
    Series of validator counts per prefix.  ``total`` defaults to the mapped
    validator count; a larger total makes unmapped stake count against us.
    """
    if not 0 <= target_fraction <= 1:
        raise PlanError(f"target fraction {target_fraction} outside [0, 1]")
    counts = _prefix_counts(mapping)
    total = int(counts.sum()) if total is None else int(total)
    if total <= 0:
        raise PlanError("mapping is empty")
    if target_fraction == 0:
        return PrefixSelection([], 0.0, [])
    need = target_fraction * total
    cum = np.cumsum(counts.to_numpy())
    if cum[-1] < need - 1e-9:
        raise PlanError(f"mapping covers {cum[-1] / total:.3f} of stake, below {target_fraction}")
    k = int(np.searchsorted(cum, need - 1e-9) + 1)
    return PrefixSelection(list(counts.index[:k]), float(cum[k - 1] / total), counts.to_numpy()[:k].tolist())


def stakebleed_plan(mapping, target_fraction: float, start_slot: int, end_slot: int,
                    total: int | None = None, success_prob: float = 1.0) -> AttackPlan:
    sel = stakebleed_select_prefixes(mapping, target_fraction, total)
    actions = []
    if sel.prefixes:
        actions.append(HijackAction(set(sel.prefixes), start_slot, end_slot, HijackMode.PARTITION_DROP,
                                    success_prob))
    return AttackPlan(AttackKind.STAKEBLEED, actions, target_fraction=target_fraction,
                      events=[{"epoch": None, "selected": list(sel.prefixes),
                               "achieved_fraction": sel.achieved_fraction}])


def targeted_validators(plan: AttackPlan, predicted: pd.Series) -> np.ndarray:
    """Validator ids whose predicted prefix is hijacked by the plan."""
    return predicted.index.to_numpy()[predicted.isin(plan.prefixes).to_numpy()]


def stakebleed_monitor_and_expand(plan: AttackPlan, leaking, candidates: dict, boundary_slot: int,
                                  success_prob: float | None = None, hedge: bool = False,
                                  prefix_share: dict | None = None, max_fraction: float = 0.45,
                                  hedge_routes: int = 2) -> AttackPlan:
    """Add next-best candidate prefixes for targeted validators still seen on chain.

    ``leaking`` lists targeted validators whose attestations appeared on the
    canonical chain; ``candidates`` maps a validator to its ordered candidate
    prefixes.  New actions start at ``boundary_slot`` and share the plan's
    end.  With ``hedge`` a prefix already hijacked is announced again as an
    independent extra route, which helps when hijacks only partly succeed.
    ``prefix_share`` (the attacker's own estimate of stake per prefix) keeps
    the hijacked side below ``max_fraction``, so it never becomes canonical.
    Each boundary announces ``hedge_routes`` independent hedge routes.
    """
    if not plan.hijack_actions:
        return plan
    end = max(a.end for a in plan.hijack_actions)
    if boundary_slot > end:
        return plan
    taken = plan.prefixes
    share = prefix_share or {}
    held = sum(share.get(p, 0.0) for p in taken)
    add, hedges, unresolved = [], [], []
    for v in sorted(int(x) for x in leaking):
        cands = [c for c in candidates.get(v, []) if c not in taken and c not in add]
        cands = [c for c in cands if held + share.get(c, 0.0) <= max_fraction]
        if cands:
            add.append(cands[0])
            held += share.get(cands[0], 0.0)
        elif hedge and candidates.get(v):
            hedges.append(candidates[v][0])
        else:
            unresolved.append(v)
    prob = plan.hijack_actions[0].success_prob if success_prob is None else success_prob
    actions = list(plan.hijack_actions)
    if add:
        actions.append(HijackAction(set(add), boundary_slot, end, HijackMode.PARTITION_DROP, prob))
    hedges = sorted(set(hedges))
    if hedges:
        actions += [HijackAction(set(hedges), boundary_slot, end, HijackMode.PARTITION_DROP, prob)
                    for _ in range(hedge_routes)]
    event = {"boundary_slot": boundary_slot, "added": sorted(add), "hedged": hedges,
             "unresolved": unresolved}
    return AttackPlan(plan.kind, actions, plan.target_fraction, mapping_source=plan.mapping_source,
                      hedge_prefixes=plan.hedge_prefixes + hedges, events=plan.events + [event])


@dataclass
class StakebleedOutcome:
    plan: AttackPlan
    simulator: ChainSimulator
    isolation: list              # per epoch: share of all validators absent from the canonical chain
    leaking: list                # per epoch: targeted validators seen on chain
    analytic: LossBreakdown
    simulated_loss_gwei: int
    achieved_fraction: float

    def report(self) -> dict:
        return {
            "kind": self.plan.kind.value,
            "prefixes": sorted(self.plan.prefixes),
            "achieved_fraction": self.achieved_fraction,
            "isolation_per_epoch": self.isolation,
            "leaking_per_epoch": [len(x) for x in self.leaking],
            "active_hijack_seconds": self.plan.active_hijack_seconds(),
            "losses_eth": self.analytic.in_eth(),
            "simulated_loss_eth": self.simulated_loss_gwei / GWEI_PER_ETH,
            "events": self.plan.events,
        }


def execute_stakebleed(plan: AttackPlan, topology: Topology, predicted: pd.Series, candidates: dict | None = None,
                       epochs: int | None = None, seed: int = 0, expand: bool = True,
                       hedge: bool = False, max_fraction: float = 0.45) -> StakebleedOutcome:
    """Run the partition through the chain simulator, expanding at every epoch boundary."""
    if not plan.hijack_actions:
        raise PlanError("plan has no hijack actions")
    sim = ChainSimulator(topology, HijackSchedule(topology, plan.hijack_actions, seed=seed), seed=seed)
    spe = sim.params.slots_per_epoch
    start = min(a.start for a in plan.hijack_actions)
    end = max(a.end for a in plan.hijack_actions)
    if start % spe:
        raise PlanError("stakebleed plans start on an epoch boundary")
    n_epochs = (end + 1) // spe if epochs is None else epochs
    targets = targeted_validators(plan, predicted)   # fixed by the original plan
    share = (predicted.value_counts() / len(predicted)).to_dict()
    control = ChainSimulator(topology, None, seed=seed)
    isolation, leaking = [], []
    for e in range(n_epochs):
        sim.run_epoch()
        control.run_epoch()
        if e * spe < start:
            continue
        _, tgt, _ = sim.state.participation[e]
        isolation.append(float(1 - tgt.mean()))
        seen = targets[tgt[targets]]
        leaking.append(seen.tolist())
        if expand and len(seen) and candidates is not None:
            new = stakebleed_monitor_and_expand(plan, seen, candidates, (e + 1) * spe, hedge=hedge,
                                                prefix_share=share, max_fraction=max_fraction)
            if new.hijack_actions != plan.hijack_actions:
                plan = new
                sim.schedule = HijackSchedule(topology, plan.hijack_actions, seed=seed)
                sim._comp_cache.clear()
    n = len(sim.validators)
    hij_count = int(round(np.mean(isolation[:1]) * n)) if isolation else 0
    p = hij_count / n
    duration = (end - start + 1) / spe
    analytic = aggregate_attack_losses(p, duration, EconContext(n))
    simulated = int((control.validators.balance - sim.validators.balance).sum())
    return StakebleedOutcome(plan, sim, isolation, leaking, analytic, simulated, p)


def stakebleed_report(p: float, hours: float, ctx: EconContext) -> LossBreakdown:
    """Closed-form losses of holding a fraction ``p`` partitioned for ``hours``."""
    return aggregate_attack_losses(p, hours_to_epochs(hours, ctx.params), ctx)


# ---------------------------------------------------------------- knockblock

def _schedule_slots(schedules) -> dict:
    out = {}
    for sch in schedules:
        for i, v in enumerate(sch.proposers):
            out[sch.epoch * len(sch.proposers) + i] = v
    return out


def knockblock_plan(schedules, own_validator: int, mapping: dict, lead_time_slots: int = DEFAULT_LEAD_SLOTS,
                    after_slot: int = 0, hedges: dict | None = None) -> AttackPlan:
    """Knock out the proposer right before our own next proposal.

    ``schedules`` are the known ProposerSchedules (two epochs of lookahead);
    ``mapping`` maps validator id to its prefix.  If the proposer at s-1 is
    unmapped, the nearest mapped proposer up to 7 slots earlier is used.
    """
    if isinstance(schedules, ProposerSchedule):
        schedules = [schedules]
    if lead_time_slots < 0:
        raise PlanError("lead time must be non-negative")
    slots = _schedule_slots(schedules)
    own = sorted(s for s, v in slots.items() if v == own_validator and s >= after_slot)
    if not own:
        raise PlanError(f"validator {own_validator} is not scheduled within the lookahead")
    s = own[0]
    target = None
    for k in range(1, FALLBACK_SLOTS + 1):
        t = s - k
        if t < 0:
            break
        v = slots.get(t)
        if v is None:
            raise PlanError(f"slot {t} lies outside the known schedule")
        if v == own_validator:
            break
        if v in mapping:
            target = t
            break
    if target is None:
        raise PlanError(f"no mappable proposer within {FALLBACK_SLOTS} slots before slot {s}")
    victim = slots[target]
    prefix = mapping[victim]
    hedge = list((hedges or {}).get(victim, []))
    hedge = [h for h in hedge if h != prefix]
    action = HijackAction({prefix, *hedge}, target, target, HijackMode.PROPOSER_DROP)
    return AttackPlan(AttackKind.KNOCKBLOCK, [action], target_slot=target, target_validator=victim,
                      own_validator=own_validator, own_slot=s, lead_time_slots=lead_time_slots,
                      hedge_prefixes=hedge, expected_delays=list(range(1, s - target + 1)))


@dataclass
class KnockblockOutcome:
    plan: AttackPlan
    target_missed: bool
    absorbed_delays: list
    attacker_reward_gwei: int
    baseline_reward_gwei: int
    mev_uplift_eth: float
    active_hijack_seconds: int

    def report(self) -> dict:
        d = asdict(self)
        d["plan"] = {"target_slot": self.plan.target_slot, "target_validator": self.plan.target_validator,
                     "own_slot": self.plan.own_slot, "prefixes": sorted(self.plan.prefixes),
                     "hedge_prefixes": self.plan.hedge_prefixes}
        d["reward_delta_gwei"] = self.attacker_reward_gwei - self.baseline_reward_gwei
        return d


def execute_knockblock(plan: AttackPlan, topology: Topology, seed: int = 0, success_prob: float = 1.0,
                       baseline_mev_eth: float = 0.0, mev_multiplier: float = MEV_MULTIPLIER) -> KnockblockOutcome:
    """Simulate the epochs around the attack with and without the hijack."""
    if plan.kind != AttackKind.KNOCKBLOCK:
        raise PlanError("not a knockblock plan")
    actions = [a if success_prob == 1.0 else HijackAction(a.prefixes, a.start, a.end, a.mode, success_prob)
               for a in plan.hijack_actions]
    spe = 32
    last_epoch = plan.own_slot // spe + 1
    attacked = ChainSimulator(topology, HijackSchedule(topology, actions, seed=seed), seed=seed)
    control = ChainSimulator(topology, None, seed=seed)
    for sim in (attacked, control):
        sim.run(last_epoch + 1)
    if attacked.schedule_for(plan.own_slot // spe).proposers[plan.own_slot % spe] != plan.own_validator:
        raise PlanError("plan does not match the simulated proposer schedule")
    missed = plan.target_slot in set(attacked.state.missed_slots)
    rew, delays = attacked.state.block_rewards.get(plan.own_slot, (0, []))
    base, _ = control.state.block_rewards.get(plan.own_slot, (0, []))
    mev = baseline_mev_eth * (mev_multiplier - 1.0) if missed else 0.0
    return KnockblockOutcome(plan, missed, delays, int(rew), int(base), mev, plan.active_hijack_seconds())


def execute(plan: AttackPlan, topology: Topology, **kw):
    if plan.kind == AttackKind.KNOCKBLOCK:
        return execute_knockblock(plan, topology, **kw)
    return execute_stakebleed(plan, topology, **kw)


# ---------------------------------------------------------------- campaign budget

def daily_damage(ctx: EconContext, stakebleed_p: float, budget_hours: float = 24.0) -> dict:
    """Damage (ETH) a 24 h active-hijack budget buys with each attack type.

    Knockblock spends one 12 s enforcement slot per attack; stakebleed
    holds one partition for the whole budget.
    """
    attacks = int(budget_hours * 3600 // SLOT_SECONDS)
    kb = attacks * knockblock_attack_damage(ctx) / GWEI_PER_ETH
    sb = stakebleed_report(stakebleed_p, budget_hours, ctx).total / GWEI_PER_ETH
    return {"knockblock_attacks": attacks, "knockblock_eth": kb, "stakebleed_eth": sb}


def report_json(report: dict) -> str:
    return json.dumps(report, sort_keys=True, indent=2, default=_json_default)


def _json_default(o):
    if isinstance(o, (np.integer,)):
        return int(o)
    if isinstance(o, (np.floating,)):
        return float(o)
    if isinstance(o, (set, frozenset)):
        return sorted(o)
    if isinstance(o, enum.Enum):
        return o.value
    if isinstance(o, HijackAction):
        return {"prefixes": sorted(o.prefixes), "start": o.start, "end": o.end, "mode": o.mode.value}
    raise TypeError(type(o))
