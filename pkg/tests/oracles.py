"""Independent reference computations used to freeze expected values.

Nothing here imports from ``posroute``; each oracle is a deliberately naive
re-derivation (big-integer bisection, literal constants, plain loops).
"""
from decimal import Decimal, getcontext
import math

GWEI = 10**9


def isqrt_bisect(n: int) -> int:
    lo, hi = 0, 1 << ((n.bit_length() + 1) // 2 + 1)
    while lo < hi:
        mid = (lo + hi + 1) // 2
        if mid * mid <= n:
            lo = mid
        else:
            hi = mid - 1
    return lo


def isqrt_decimal(n: int) -> int:
    getcontext().prec = 60
    return int(Decimal(n).sqrt().to_integral_value(rounding="ROUND_FLOOR"))


def base_reward_oracle(total_stake_gwei: int) -> int:
    return GWEI * 64 // isqrt_bisect(total_stake_gwei)


def mainnet_losses_oracle(p: float, epochs: float, n_val: int = 1_063_660) -> dict:
    """Epoch-by-epoch loss ledger at mainnet scale (b = 346, n = 32), literal constants.

    Conventions: first four epochs outside the leak, leak afterwards if more
    than a third is hijacked; score += 4 before the leak penalty
    s * B / (4 * 2**24); effective balance drops one ETH once the balance is
    more than 0.25 ETH below it; a fractional last epoch is pro-rata.
    """
    hij = int(round(p * n_val))
    honest = n_val - hij
    leak_ok = hij * 3 > n_val
    bal = 32 * GWEI
    eff = 32 * GWEI
    score = 0
    out = dict(missed=0, att=0, inact=0, nonhij=0)
    whole = int(math.floor(epochs))
    frac = epochs - whole
    k = 0
    while k < whole + (1 if frac > 0 else 0):
        w = 1.0 if k < whole else frac
        leak = leak_ok and k >= 4
        inc = eff // GWEI
        att = inc * 346 * 40 // 64
        if leak:
            score += 4
        else:
            score = max(0, score - 16)
        inact = score * eff // (4 * 16_777_216)
        if leak:
            rate = 1384 * p + 9342
        else:
            rate = 13148 * p - 2422 * p * p
        if w < 1.0:
            att, inact, full = int(att * w), int(inact * w), int(11072 * w)
            out["nonhij"] += int(rate * w * honest)
        else:
            full = 11072
            out["nonhij"] += int(rate * honest)
        out["missed"] += full * hij
        out["att"] += att * hij
        out["inact"] += inact * hij
        bal -= att + inact
        if bal + GWEI // 4 < eff:
            eff = bal - bal % GWEI
        k += 1
    out["total"] = out["missed"] + out["att"] + out["inact"] + out["nonhij"]
    return out


def entropy_efficiency_oracle(probs) -> float:
    probs = [q for q in probs]
    k = len(probs)
    if k == 1:
        return 0.0
    h = -sum(q * math.log(q) for q in probs if q > 0)
    return h / math.log(k)
