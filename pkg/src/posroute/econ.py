"""Closed-form reward, penalty and loss accounting for Ethereum PoS.

All Gwei amounts are Python ints (unbounded, so wider than 128 bits) and use
floor division once per component. Aggregates over a validator population
are also returned in Gwei; divide by ``GWEI_PER_ETH`` for ETH.

The quantities here double as the analytic reference the consensus
simulator is checked against.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, fields

GWEI_PER_ETH = 10**9
EPOCH_MINUTES = 6.4


@dataclass(frozen=True)
class RewardParams:
    """Protocol constants. Defaults are the Altair/Deneb mainnet values."""

    weight_source: int = 14
    weight_target: int = 26
    weight_head: int = 14
    weight_sync: int = 2
    weight_proposer: int = 8
    weight_denominator: int = 64
    base_reward_factor: int = 64
    increment: int = GWEI_PER_ETH
    inactivity_bias: int = 4
    inactivity_quotient: int = 2**24
    inactivity_recovery: int = 16
    ejection_balance: int = 16 * GWEI_PER_ETH
    max_effective_balance: int = 32 * GWEI_PER_ETH
    hysteresis_quotient: int = 4
    hysteresis_downward_multiplier: int = 1
    hysteresis_upward_multiplier: int = 5
    sync_committee_size: int = 512
    slots_per_epoch: int = 32
    seconds_per_slot: int = 12
    leak_trigger_epochs: int = 4
    max_included_attestation_slots: int = 8

    def __post_init__(self):
        for f in fields(self):
            if getattr(self, f.name) <= 0:
                raise ValueError(f"{f.name} must be strictly positive")
        total = (self.weight_source + self.weight_target + self.weight_head
                 + self.weight_sync + self.weight_proposer)
        if total != self.weight_denominator:
            raise ValueError(
                f"duty weights sum to {total}, expected {self.weight_denominator}")

    @property
    def attestation_weight(self) -> int:
        return self.weight_source + self.weight_target + self.weight_head

    @property
    def penalty_weight(self) -> int:
        return self.weight_source + self.weight_target


DEFAULT_PARAMS = RewardParams()


def base_reward(total_active_stake: int, params: RewardParams = DEFAULT_PARAMS) -> int:
    """Per-increment base reward in Gwei for a given total active stake (Gwei)."""
    if total_active_stake <= 0:
        raise ValueError("total active stake must be positive")
    return params.increment * params.base_reward_factor // math.isqrt(int(total_active_stake))


@dataclass(frozen=True)
class EconContext:
    """Network-wide economic state: N validators with ``increments`` ETH of effective balance each."""

    validator_count: int
    increments: int = 32
    params: RewardParams = DEFAULT_PARAMS
    total_active_stake: int | None = None
    base_reward: int = field(init=False)

    def __post_init__(self):
        if self.validator_count <= 0:
            raise ValueError("validator_count must be positive")
        if self.increments < 0:
            raise ValueError("increments must be non-negative")
        stake = self.total_active_stake
        if stake is None:
            # the network stake is fixed at 32 ETH per validator even when
            # the representative validator is examined at a lower balance
            stake = self.validator_count * 32 * self.params.increment
            object.__setattr__(self, "total_active_stake", stake)
        object.__setattr__(self, "base_reward", base_reward(stake, self.params))

    def with_increments(self, n: int) -> "EconContext":
        return EconContext(self.validator_count, n, self.params, self.total_active_stake)


@dataclass(frozen=True)
class RewardComponents:
    """Per-validator expected rewards per epoch, plus block-level amounts (Gwei)."""

    r_source: int
    r_target: int
    r_head: int
    r_attestation_total: int
    r_proposer_avg: int
    r_sync_avg: int
    r_block_full: int
    r_sync_member_epoch: int

    @property
    def full_reward(self) -> int:
        return self.r_attestation_total + self.r_proposer_avg + self.r_sync_avg


def reward_components(ctx: EconContext) -> RewardComponents:
    p = ctx.params
    nb = ctx.increments * ctx.base_reward
    r_s = nb * p.weight_source // p.weight_denominator
    r_t = nb * p.weight_target // p.weight_denominator
    r_h = nb * p.weight_head // p.weight_denominator
    r_p = nb * p.weight_proposer // p.weight_denominator
    r_y = nb * p.weight_sync // p.weight_denominator
    n_val = ctx.validator_count
    return RewardComponents(
        r_source=r_s,
        r_target=r_t,
        r_head=r_h,
        r_attestation_total=r_s + r_t + r_h,
        r_proposer_avg=r_p,
        r_sync_avg=r_y,
        r_block_full=r_p * n_val // p.slots_per_epoch,
        r_sync_member_epoch=n_val * nb * p.weight_sync // p.weight_denominator // p.sync_committee_size,
    )


def _check_fraction(p: float) -> None:
    if not 0.0 <= p <= 1.0:
        raise ValueError(f"fraction {p} outside [0, 1]")


def expected_validator_reward(p: float, leak: bool, ctx: EconContext) -> float:
    """Expected per-epoch reward of a non-hijacked validator when a fraction ``p`` is partitioned.

    Attestation rewards shrink with participation (1 - p); the head vote is
    additionally lost whenever the inclusion slot's proposer is hijacked; the
    proposer share shrinks because fewer attestations are available. During a
    leak the three attestation terms are zero.
    """
    _check_fraction(p)
    c = reward_components(ctx)
    prm = ctx.params
    n_val = ctx.validator_count
    proposer = prm.slots_per_epoch * c.r_block_full / n_val
    sync = prm.sync_committee_size * c.r_sync_member_epoch / n_val
    if leak:
        attest = 0.0
    else:
        attest = (1 - p) * c.r_head + c.r_source + c.r_target
    return (1 - p) * (attest + proposer) + sync


def nonhijacked_loss_rate(p: float, leak: bool, ctx: EconContext) -> float:
    """Per-epoch reward shortfall of a non-hijacked validator, from the component values."""
    _check_fraction(p)
    c = reward_components(ctx)
    if leak:
        return c.r_proposer_avg * p + c.r_attestation_total
    linear = 2 * c.r_head + c.r_source + c.r_target + c.r_proposer_avg
    return linear * p - c.r_head * p * p


def attestation_penalty(ctx: EconContext) -> int:
    prm = ctx.params
    return ctx.increments * ctx.base_reward * prm.penalty_weight // prm.weight_denominator


def inactivity_penalty(score: int, effective_balance: int, params: RewardParams = DEFAULT_PARAMS) -> int:
    if score < 0 or effective_balance < 0:
        raise ValueError("score and effective balance must be non-negative")
    return score * effective_balance // (params.inactivity_bias * params.inactivity_quotient)


def inactivity_score_update(in_leak: bool, participated: bool, score: int,
                            params: RewardParams = DEFAULT_PARAMS) -> int:
    if score < 0:
        raise ValueError("score must be non-negative")
    if not in_leak:
        return max(score - params.inactivity_recovery, 0)
    if participated:
        return max(score - 1, 0)
    return score + params.inactivity_bias


def update_effective_balance(balance: int, effective_balance: int,
                             params: RewardParams = DEFAULT_PARAMS) -> int:
    """Apply the effective-balance hysteresis rule (1 ETH steps, 0.25 ETH down / 1.25 ETH up)."""
    inc = params.increment
    step = inc // params.hysteresis_quotient
    down = step * params.hysteresis_downward_multiplier
    up = step * params.hysteresis_upward_multiplier
    if balance + down < effective_balance or effective_balance + up < balance:
        return min(balance - balance % inc, params.max_effective_balance)
    return effective_balance


@dataclass(frozen=True)
class LossBreakdown:
    """Aggregate losses (Gwei) of a partition attack over its duration."""

    hijacked_missed_rewards: int
    hijacked_attestation_penalties: int
    hijacked_inactivity_penalties: int
    nonhijacked_losses: int
    total: int
    leak_triggered: bool
    leak_start_epoch: int | None
    # informational: missed rewards valued at the attack-time (reduced) rate
    # rather than the no-attack counterfactual; not part of ``total``
    missed_rewards_attack_rate: int = 0

    def in_eth(self) -> dict:
        return {
            "hijacked_missed_rewards": self.hijacked_missed_rewards / GWEI_PER_ETH,
            "hijacked_attestation_penalties": self.hijacked_attestation_penalties / GWEI_PER_ETH,
            "hijacked_inactivity_penalties": self.hijacked_inactivity_penalties / GWEI_PER_ETH,
            "hijacked_penalties": (self.hijacked_attestation_penalties
                                   + self.hijacked_inactivity_penalties) / GWEI_PER_ETH,
            "nonhijacked_losses": self.nonhijacked_losses / GWEI_PER_ETH,
            "total": self.total / GWEI_PER_ETH,
        }


def hours_to_epochs(hours: float, params: RewardParams = DEFAULT_PARAMS) -> float:
    return hours * 3600 / (params.seconds_per_slot * params.slots_per_epoch)


def resolve_hijacked_count(p: float, validator_count: int) -> int:
    return int(round(p * validator_count))


def aggregate_attack_losses(p: float, duration_epochs: float, ctx: EconContext,
                            leak_enabled: bool = True) -> LossBreakdown:
    """Integrate per-epoch losses of a partition of fraction ``p`` held for ``duration_epochs``.

    The leak starts after ``leak_trigger_epochs`` full epochs when strictly
    more than a third of the validators are hijacked. Hijacked validators are
    tracked as one representative record (balance, effective balance,
    inactivity score) since they are identical; a partial final epoch accrues
    pro-rata amounts. ``leak_enabled=False`` gives the no-leak counterfactual.
    """
    _check_fraction(p)
    if duration_epochs < 0:
        raise ValueError("duration must be non-negative")
    prm = ctx.params
    n_val = ctx.validator_count
    hijacked = resolve_hijacked_count(p, n_val)
    honest = n_val - hijacked
    can_leak = leak_enabled and 3 * hijacked > n_val
    comps = reward_components(ctx)

    balance = ctx.increments * prm.increment
    effective = balance
    score = 0
    missed = att_pen = inact_pen = nonhij = missed_alt = 0
    leak_start = None

    whole = math.floor(duration_epochs)
    frac = duration_epochs - whole
    n_epochs = whole + (1 if frac > 0 else 0)
    for epoch in range(n_epochs):
        weight = 1.0 if epoch < whole else frac
        leak = can_leak and epoch >= prm.leak_trigger_epochs
        if leak and leak_start is None:
            leak_start = epoch

        n_eff = effective // prm.increment
        pen_a = attestation_penalty(ctx.with_increments(n_eff))
        score = inactivity_score_update(leak, False, score, prm)
        pen_i = inactivity_penalty(score, effective, prm) if score > 0 else 0
        honest_rate = nonhijacked_loss_rate(p, leak, ctx)
        alt_rate = expected_validator_reward(p, leak, ctx)

        if weight < 1.0:
            pen_a = int(pen_a * weight)
            pen_i = int(pen_i * weight)
            full = int(comps.full_reward * weight)
            alt = int(alt_rate * weight)
            nonhij += int(honest_rate * weight * honest)
        else:
            full = comps.full_reward
            alt = int(alt_rate)
            nonhij += int(honest_rate * honest)

        missed += full * hijacked
        missed_alt += alt * hijacked
        att_pen += pen_a * hijacked
        inact_pen += pen_i * hijacked
        balance -= pen_a + pen_i
        effective = update_effective_balance(balance, effective, prm)

    total = missed + att_pen + inact_pen + nonhij
    return LossBreakdown(
        hijacked_missed_rewards=missed,
        hijacked_attestation_penalties=att_pen,
        hijacked_inactivity_penalties=inact_pen,
        nonhijacked_losses=nonhij,
        total=total,
        leak_triggered=leak_start is not None,
        leak_start_epoch=leak_start,
        missed_rewards_attack_rate=missed_alt,
    )


def time_to_ejection(initial_balance: int, ctx: EconContext, *, inactivity: bool = True,
                     max_epochs: int | None = None) -> int | None:
    """Epochs until an always-absent validator is ejected under a continuous leak.

    Returns ``None`` when the effective balance has not reached the ejection
    threshold within ``max_epochs`` (default: ten times three weeks).
    """
    prm = ctx.params
    if initial_balance <= prm.ejection_balance:
        raise ValueError("initial balance already at or below the ejection balance")
    if max_epochs is None:
        max_epochs = 10 * int(math.ceil(21 * 24 * 60 / EPOCH_MINUTES))
    balance = int(initial_balance)
    effective = min(balance - balance % prm.increment, prm.max_effective_balance)
    score = 0
    for epoch in range(1, max_epochs + 1):
        penalty = attestation_penalty(ctx.with_increments(effective // prm.increment))
        if inactivity:
            score = inactivity_score_update(True, False, score, prm)
            penalty += inactivity_penalty(score, effective, prm)
        balance = max(balance - penalty, 0)
        effective = update_effective_balance(balance, effective, prm)
        if effective <= prm.ejection_balance:
            return epoch
    return None


def absent_balance_trajectory(leak_flags, ctx: EconContext, balance: int | None = None,
                              score: int = 0) -> list:
    """Balance after each epoch of a validator that never attests.

    ``leak_flags[i]`` says whether epoch i is processed in leak mode.  The
    attestation penalty applies every epoch; the inactivity score grows by
    the bias in a leak and recovers outside it, and its penalty applies
    whenever the score is positive.
    """
    prm = ctx.params
    bal = ctx.increments * prm.increment if balance is None else int(balance)
    eff = min(bal - bal % prm.increment, prm.max_effective_balance)
    out = []
    for leak in leak_flags:
        pen = attestation_penalty(ctx.with_increments(eff // prm.increment))
        score = inactivity_score_update(bool(leak), False, score, prm)
        if score > 0:
            pen += inactivity_penalty(score, eff, prm)
        bal = max(bal - pen, 0)
        eff = update_effective_balance(bal, eff, prm)
        out.append(bal)
    return out


def _tier_weight(delay: int, params: RewardParams) -> int:
    if delay == 1:
        return params.attestation_weight
    if delay <= 5:
        return params.weight_source + params.weight_target
    return params.weight_target


def knockblock_block_reward(included_slot_delays, ctx: EconContext) -> int:
    """Proposer reward (Gwei) of a block absorbing attestations from the given slot delays.

    Each included slot carries one committee (N / slots_per_epoch attesters)
    whose value depends on its inclusion delay: 1 slot keeps source, target
    and head; 2-5 slots lose the head; 6-32 slots keep only the target. Each
    absorbed slot also carries its sync-committee contribution, so the sync
    proposer share is counted once per included slot (at least once, for the
    block's own sync aggregate).
    """
    prm = ctx.params
    delays = list(included_slot_delays)
    if len(delays) > prm.max_included_attestation_slots:
        raise ValueError(f"at most {prm.max_included_attestation_slots} attestation slots per block")
    if len(set(delays)) != len(delays):
        raise ValueError("duplicate delays")
    for d in delays:
        if not 1 <= d <= prm.slots_per_epoch:
            raise ValueError(f"delay {d} outside [1, {prm.slots_per_epoch}]")
    nb = ctx.increments * ctx.base_reward
    denom = prm.weight_denominator - prm.weight_proposer
    committee = ctx.validator_count / prm.slots_per_epoch
    attest = sum(committee * (nb * _tier_weight(d, prm) // prm.weight_denominator) for d in delays)
    sync_slot_total = ctx.validator_count * nb * prm.weight_sync / prm.weight_denominator / prm.slots_per_epoch
    sync_shares = max(1, len(delays))
    return int((attest + sync_shares * sync_slot_total) * prm.weight_proposer / denom)


@dataclass(frozen=True)
class ProfitReport:
    annual_uplift_eth: float
    annual_uplift_usd: float
    annual_cost_usd: float
    profit_usd: float
    per_validator_uplift_eth: float
    break_even_validators: float
    min_profitable_validators: int | None


def knockblock_profitability(validators_owned: int, annual_as_cost_usd: float, eth_price_usd: float,
                             proposals_per_year: float, mev_uplift_eth: float,
                             attestation_uplift_eth: float) -> ProfitReport:
    args = (validators_owned, annual_as_cost_usd, eth_price_usd, proposals_per_year,
            mev_uplift_eth, attestation_uplift_eth)
    if any(a < 0 for a in args):
        raise ValueError("inputs must be non-negative")
    per_validator = proposals_per_year * (mev_uplift_eth + attestation_uplift_eth)
    uplift = validators_owned * per_validator
    per_validator_usd = per_validator * eth_price_usd
    if per_validator_usd > 0:
        break_even = annual_as_cost_usd / per_validator_usd
        min_profitable = math.floor(break_even) + 1
    else:
        break_even = math.inf
        min_profitable = None
    return ProfitReport(
        annual_uplift_eth=uplift,
        annual_uplift_usd=uplift * eth_price_usd,
        annual_cost_usd=annual_as_cost_usd,
        profit_usd=uplift * eth_price_usd - annual_as_cost_usd,
        per_validator_uplift_eth=per_validator,
        break_even_validators=break_even,
        min_profitable_validators=min_profitable,
    )


def throughput_factor(p: float) -> float:
    _check_fraction(p)
    return 1.0 - p


def knockblock_attack_damage(ctx: EconContext) -> int:
    """Network-wide loss (Gwei) from one suppressed block.

    The victim loses its block reward, the committee whose attestations were
    meant for the missing block loses its head reward (included one slot
    late), and the sync committee loses one slot of sync rewards.
    """
    prm = ctx.params
    comps = reward_components(ctx)
    nb = ctx.increments * ctx.base_reward
    committee = ctx.validator_count / prm.slots_per_epoch
    head_loss = committee * (nb * prm.weight_head // prm.weight_denominator)
    sync_slot = prm.sync_committee_size * comps.r_sync_member_epoch / prm.slots_per_epoch
    return int(comps.r_block_full + head_loss + sync_slot)
