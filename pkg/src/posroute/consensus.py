"""Slot/epoch state machine: proposer schedule, committees, participation,
justification and finalization, the inactivity leak, and balance updates.

Fork choice is reduced to one rule: the connected component of the network
holding the most effective stake is canonical.  Validators elsewhere simply
never appear on chain, and adopt the canonical view once reconnected.
"""
from __future__ import annotations

import enum
import json
from dataclasses import dataclass, field

import numpy as np
import pandas as pd

from .econ import DEFAULT_PARAMS, RewardParams, base_reward
from .rng import rng_for
from .topology import N_TOPICS, HijackSchedule, Topology

GWEI = 10**9
TIMELY_SOURCE_DELAY = 5     # integer sqrt of the slots per epoch
SNAPSHOT_COLUMNS = ["epoch", "validator_id", "balance", "effective_balance", "inactivity_score",
                    "participated_src", "participated_tgt", "participated_head"]


class Status(str, enum.Enum):
    ACTIVE = "active"
    EJECTED = "ejected"


@dataclass
class ValidatorRecord:
    validator_id: int
    balance: int
    effective_balance: int
    inactivity_score: int
    node_id: int
    deposit_cluster_id: int
    status: Status = Status.ACTIVE


class ValidatorSet:
    """Column store of validator records."""

    def __init__(self, node, cluster=None, balance: int = 32 * GWEI,
                 params: RewardParams = DEFAULT_PARAMS):
        self.node = np.asarray(node, dtype=np.int64)
        n = len(self.node)
        self.cluster = np.zeros(n, np.int64) if cluster is None else np.asarray(cluster, np.int64)
        self.balance = np.full(n, balance, dtype=np.int64)
        inc = params.increment
        self.effective = np.minimum(self.balance - self.balance % inc, params.max_effective_balance)
        self.score = np.zeros(n, dtype=np.int64)
        self.active = self.effective > params.ejection_balance
        self.params = params

    @classmethod
    def from_topology(cls, topology: Topology, balance: int = 32 * GWEI,
                      params: RewardParams = DEFAULT_PARAMS) -> "ValidatorSet":
        return cls(topology.validator_node, topology.validator_cluster, balance, params)

    def __len__(self):
        return len(self.node)

    def record(self, i: int) -> ValidatorRecord:
        return ValidatorRecord(i, int(self.balance[i]), int(self.effective[i]), int(self.score[i]),
                               int(self.node[i]), int(self.cluster[i]),
                               Status.ACTIVE if self.active[i] else Status.EJECTED)

    def copy(self) -> "ValidatorSet":
        out = object.__new__(ValidatorSet)
        for k, v in self.__dict__.items():
            out.__dict__[k] = v.copy() if isinstance(v, np.ndarray) else v
        return out


# ---------------------------------------------------------------- duties

@dataclass(frozen=True)
class ProposerSchedule:
    epoch: int
    proposers: tuple


def proposer_schedule(seed: int, epoch: int, effective_balances, active=None,
                      slots_per_epoch: int = 32) -> ProposerSchedule:
    """Proposers for ``epoch``, drawn with probability proportional to effective balance."""
    eff = np.asarray(effective_balances, dtype=float)
    mask = eff > 0 if active is None else (np.asarray(active, bool) & (eff > 0))
    ids = np.flatnonzero(mask)
    if len(ids) == 0:
        raise ValueError("no active validators to propose")
    w = eff[ids] / eff[ids].sum()
    pick = rng_for(seed, "proposer", epoch).choice(ids, size=slots_per_epoch, p=w)
    return ProposerSchedule(epoch, tuple(int(x) for x in pick))


def committee_assignment(seed: int, epoch: int, active, slots_per_epoch: int = 32,
                         n_topics: int = N_TOPICS):
    """(slot_in_epoch, topic) per validator; -1 for inactive validators.

    A seeded shuffle of the active set is cut into equal contiguous slot
    committees and dealt round-robin across topics.
    """
    active = np.asarray(active, dtype=bool)
    ids = np.flatnonzero(active)
    n = len(ids)
    slot = np.full(len(active), -1, dtype=np.int64)
    topic = np.full(len(active), -1, dtype=np.int64)
    if n == 0:
        return slot, topic
    perm = ids[rng_for(seed, "committee", epoch).permutation(n)]
    pos = np.arange(n)
    slot[perm] = pos * slots_per_epoch // n
    topic[perm] = pos % n_topics
    return slot, topic


# ---------------------------------------------------------------- chain state

@dataclass
class ChainState:
    current_slot: int = 0
    current_epoch: int = 0
    justified_checkpoint: int = -1
    finalized_checkpoint: int = -1
    epochs_since_finality: int = 0
    in_leak: bool = False
    participation: dict = field(default_factory=dict)    # epoch -> (src, tgt, head)
    canonical_blocks: list = field(default_factory=list)  # (slot, proposer)
    missed_slots: list = field(default_factory=list)
    justified_epochs: list = field(default_factory=list)
    finalized_history: list = field(default_factory=list)  # finalized checkpoint after each epoch
    leak_epochs: list = field(default_factory=list)
    block_rewards: dict = field(default_factory=dict)     # slot -> [gwei, delays absorbed]

    def timeline(self) -> dict:
        leak = sorted(self.leak_epochs)
        spans = []
        for e in leak:
            if spans and spans[-1][1] == e - 1:
                spans[-1][1] = e
            else:
                spans.append([e, e])
        return {
            "leak_spans": spans,
            "justified_epochs": list(self.justified_epochs),
            "finalized_epochs": sorted(set(x for x in self.finalized_history if x >= 0)),
            "missed_slots": list(self.missed_slots),
        }


def canonical_throughput(state: ChainState, window: tuple) -> float:
    """Share of slots in [start, end) that carry a canonical block."""
    start, end = window
    if end <= start:
        raise ValueError("empty window")
    slots = {s for s, _ in state.canonical_blocks}
    return sum(1 for s in range(start, end) if s in slots) / (end - start)


@dataclass
class EpochAttestations:
    """What the canonical chain saw of one epoch's attestations."""
    epoch: int
    inclusion_delay: np.ndarray    # 0 when never included
    head_ok: np.ndarray            # the attested slot has a canonical block
    includer: np.ndarray           # proposer credited with the inclusion, -1 if none
    canonical_share: np.ndarray    # share of the epoch's slots spent on the canonical side
    sync_blocks: list              # (proposer, participating share) per canonical block
    include_slot: np.ndarray | None = None   # slot of the including block, -1 if none
    sync_slots: list | None = None           # slot of each entry in sync_blocks


def process_epoch(state: ChainState, validators: ValidatorSet, att: EpochAttestations,
                  params: RewardParams = DEFAULT_PARAMS) -> ChainState:
    """Apply one epoch of accounting: justification, finality, leak, rewards, penalties."""
    e = att.epoch
    v = validators
    inc = params.increment
    denom = params.weight_denominator
    active = v.active.copy()
    incr = np.where(active, v.effective // inc, 0)
    total_incr = int(incr.sum())
    b = base_reward(total_incr * inc, params)
    base = incr * b

    d = att.inclusion_delay
    src = active & (d >= 1) & (d <= TIMELY_SOURCE_DELAY)
    tgt = active & (d >= 1) & (d <= params.slots_per_epoch)
    head = active & (d == 1) & att.head_ok
    state.participation[e] = (src, tgt, head)
    for old in [k for k in state.participation if k < e - 1]:
        del state.participation[old]

    # justification and finality (two consecutive justified checkpoints)
    tgt_stake = int(v.effective[tgt].sum())
    total_stake = int(v.effective[active].sum())
    if 3 * tgt_stake >= 2 * total_stake:
        if state.justified_epochs and state.justified_epochs[-1] == e - 1:
            state.finalized_checkpoint = e - 1
        state.justified_epochs.append(e)
        state.justified_checkpoint = e
    state.finalized_history.append(state.finalized_checkpoint)

    leak = state.in_leak
    if leak:
        state.leak_epochs.append(e)
    delta = np.zeros(len(v), dtype=np.int64)

    # attester flags
    for flag, w in ((src, params.weight_source), (tgt, params.weight_target), (head, params.weight_head)):
        part_incr = int(incr[flag].sum())
        if not leak:
            delta[flag] += base[flag] * w * part_incr // (total_incr * denom)
        if w != params.weight_head:
            miss = active & ~flag
            delta[miss] -= base[miss] * w // denom

    # proposer inclusion rewards
    prop_den = (denom - params.weight_proposer) * denom // params.weight_proposer
    num = (base * (params.weight_source * src + params.weight_target * tgt
                   + params.weight_head * head)).astype(np.int64)
    has = att.includer >= 0
    credit = np.bincount(att.includer[has], weights=num[has], minlength=len(v))
    delta += (credit // prop_den).astype(np.int64)
    if att.include_slot is not None and has.any():
        slots_in = att.include_slot[has]
        for slot in np.unique(slots_in):
            sel = slots_in == slot
            entry = state.block_rewards.setdefault(int(slot), [0, []])
            entry[0] += int(num[has][sel].sum() // prop_den)
            ds = np.unique(d[has][sel])
            entry[1] = sorted(set(entry[1]) | set(int(x) for x in ds))

    # sync committee at expected value
    sync_w = params.weight_sync
    delta += (base * sync_w // denom * att.canonical_share).astype(np.int64) * active
    if att.sync_blocks:
        per_slot_total = total_incr * b * sync_w // denom // params.slots_per_epoch
        for i, (proposer, share) in enumerate(att.sync_blocks):
            amount = int(per_slot_total * share) * params.weight_proposer // (denom - params.weight_proposer)
            delta[proposer] += amount
            if att.sync_slots is not None:
                state.block_rewards.setdefault(att.sync_slots[i], [0, []])[0] += amount

    # inactivity
    if leak:
        up = active & ~tgt
        v.score[up] += params.inactivity_bias
        down = active & tgt
        v.score[down] = np.maximum(v.score[down] - 1, 0)
    else:
        v.score[active] = np.maximum(v.score[active] - params.inactivity_recovery, 0)
    pen = active & (v.score > 0)
    delta[pen] -= v.score[pen] * v.effective[pen] // (params.inactivity_bias * params.inactivity_quotient)

    v.balance[active] = np.maximum(v.balance[active] + delta[active], 0)

    # effective balance hysteresis
    step = inc // params.hysteresis_quotient
    lo = v.balance + step * params.hysteresis_downward_multiplier < v.effective
    hi = v.effective + step * params.hysteresis_upward_multiplier < v.balance
    upd = active & (lo | hi)
    v.effective[upd] = np.minimum(v.balance[upd] - v.balance[upd] % inc, params.max_effective_balance)
    ejected = active & (v.effective <= params.ejection_balance)
    v.active[ejected] = False

    state.epochs_since_finality = e - state.finalized_checkpoint
    state.in_leak = state.epochs_since_finality > params.leak_trigger_epochs
    state.current_epoch = e + 1
    state.current_slot = (e + 1) * params.slots_per_epoch
    return state


# ---------------------------------------------------------------- simulator

class ChainSimulator:
    """Runs the chain over a topology and hijack schedule, epoch by epoch."""

    def __init__(self, topology: Topology, schedule: HijackSchedule | None = None, seed: int = 0,
                 params: RewardParams = DEFAULT_PARAMS, validators: ValidatorSet | None = None):
        self.topology = topology
        self.schedule = schedule or HijackSchedule(topology, [])
        self.seed = seed
        self.params = params
        self.validators = validators or ValidatorSet.from_topology(topology, params=params)
        self.state = ChainState()
        self.snapshots = []
        self._schedules = {}
        self._eff_history = {}
        self._comp_cache = {}
        self.proposals = []   # (slot, proposer, canonical)

    # duties with two-epoch lookahead
    def schedule_for(self, epoch: int) -> ProposerSchedule:
        if epoch not in self._schedules:
            src = max(epoch - 2, -1)
            eff, act = self._eff_history.get(src, (self.validators.effective.copy(),
                                                    self.validators.active.copy()))
            self._schedules[epoch] = proposer_schedule(self.seed, epoch, eff, act,
                                                       self.params.slots_per_epoch)
        return self._schedules[epoch]

    def canonical_nodes(self, slot: int) -> np.ndarray:
        """Boolean mask of nodes on the canonical side at ``slot``."""
        key = tuple(self.schedule.active_actions(slot))
        if key not in self._comp_cache:
            if not key:
                mask = np.ones(self.topology.n_nodes, dtype=bool)
            else:
                labels = self.schedule.components(slot)
                v = self.validators
                stake = np.bincount(labels[v.node[v.active]], weights=v.effective[v.active],
                                    minlength=labels.max() + 1)
                best = int(np.argmax(stake))   # first maximum: lowest-labelled component
                mask = labels == best
            self._comp_cache[key] = mask
        return self._comp_cache[key]

    def slot_canonical(self, slot: int) -> tuple:
        spe = self.params.slots_per_epoch
        proposer = self.schedule_for(slot // spe).proposers[slot % spe]
        ok = bool(self.validators.active[proposer]) and bool(
            self.canonical_nodes(slot)[self.validators.node[proposer]])
        return proposer, ok

    def run_epoch(self) -> ChainState:
        spe = self.params.slots_per_epoch
        e = self.state.current_epoch
        v = self.validators
        self._eff_history[e - 1] = (v.effective.copy(), v.active.copy())
        slots, _ = committee_assignment(self.seed, e, v.active, spe)
        first = e * spe
        horizon = first + 2 * spe + 1
        canon = {}
        for s in range(first, horizon):
            canon[s] = self.slot_canonical(s)
        n = len(v)
        delay = np.zeros(n, dtype=np.int64)
        head_ok = np.zeros(n, dtype=bool)
        includer = np.full(n, -1, dtype=np.int64)
        inc_slot = np.full(n, -1, dtype=np.int64)
        share = np.zeros(n)
        sync_blocks, sync_slots = [], []
        for s in range(first, first + spe):
            proposer, ok = canon[s]
            node_ok = self.canonical_nodes(s)
            on_side = node_ok[v.node]
            share += on_side
            if ok:
                self.state.canonical_blocks.append((s, proposer))
                frac = float(on_side[v.active].mean()) if v.active.any() else 0.0
                sync_blocks.append((proposer, frac))
                sync_slots.append(s)
            else:
                self.state.missed_slots.append(s)
            self.proposals.append((s, proposer, ok))
            members = np.flatnonzero(slots == (s - first))
            members = members[on_side[members]]
            if len(members) == 0:
                continue
            for s2 in range(s + 1, s + spe + 1):
                p2, ok2 = canon[s2]
                if ok2:
                    delay[members] = s2 - s
                    includer[members] = p2
                    inc_slot[members] = s2
                    break
            head_ok[members] = ok
        share /= spe
        att = EpochAttestations(e, delay, head_ok, includer, share, sync_blocks, inc_slot, sync_slots)
        process_epoch(self.state, v, att, self.params)
        src, tgt, head = self.state.participation[e]
        self.snapshots.append((e, v.balance.copy(), v.effective.copy(), v.score.copy(),
                               src.copy(), tgt.copy(), head.copy()))
        return self.state

    def run(self, epochs: int) -> ChainState:
        for _ in range(epochs):
            self.run_epoch()
        return self.state

    def balances(self) -> np.ndarray:
        """(epochs, validators) balance after each processed epoch."""
        return np.array([s[1] for s in self.snapshots])

    def snapshot_frame(self) -> pd.DataFrame:
        parts = []
        for e, bal, eff, score, src, tgt, head in self.snapshots:
            parts.append(pd.DataFrame({
                "epoch": e, "validator_id": np.arange(len(bal)), "balance": bal,
                "effective_balance": eff, "inactivity_score": score,
                "participated_src": src.astype(int), "participated_tgt": tgt.astype(int),
                "participated_head": head.astype(int)}))
        if not parts:
            return pd.DataFrame(columns=SNAPSHOT_COLUMNS)
        return pd.concat(parts, ignore_index=True)[SNAPSHOT_COLUMNS]

    def timeline_json(self) -> str:
        return json.dumps(self.state.timeline(), sort_keys=True)
