"""Centralization statistics over validator mappings, plus a synthetic
distribution shaped like the measured mainnet concentration."""
from __future__ import annotations

import heapq
from dataclasses import dataclass

import numpy as np
import pandas as pd
from scipy.optimize import brentq

from .rng import rng_for
from .topology import RPKIStatus, TopologyConfig, build_topology, topology_mapping

MAINNET_VALIDATORS = 1_063_660


# ---------------------------------------------------------------- statistics

def share_cdf(mapping: pd.DataFrame, column: str) -> pd.DataFrame:
    """Cumulative validator share over groups of ``column``, largest group first."""
    if len(mapping) == 0:
        raise ValueError("empty mapping")
    counts = mapping[column].value_counts(sort=False, dropna=False)
    names = np.array(["" if pd.isna(x) else str(x) for x in counts.index])
    order = np.lexsort((names, -counts.to_numpy()))
    c = counts.to_numpy()[order]
    return pd.DataFrame({
        "rank": np.arange(1, len(c) + 1),
        column: names[order],
        "validators": c,
        "cumulative_share": np.cumsum(c) / c.sum(),
    })


def min_groups_for_fraction(mapping: pd.DataFrame, fraction: float, column: str = "prefix") -> int:
    """Smallest number of groups (largest first) whose validators reach ``fraction``."""
    if fraction <= 0:
        return 0
    cdf = share_cdf(mapping, column)["cumulative_share"].to_numpy()
    idx = np.searchsorted(cdf, fraction - 1e-12)
    if idx >= len(cdf):
        raise ValueError(f"mapping cannot reach fraction {fraction}")
    return int(idx + 1)


def top_share(mapping: pd.DataFrame, k: int, column: str) -> float:
    cdf = share_cdf(mapping, column)["cumulative_share"].to_numpy()
    return float(cdf[min(k, len(cdf)) - 1]) if k > 0 else 0.0


@dataclass
class CentralizationReport:
    validators: int
    prefixes: int
    ases: int
    countries: int
    prefixes_for_third: int
    share_top100_prefixes: float
    share_top1_as: float
    share_top3_as: float
    share_top20_as: float
    share_top1_country: float
    rpki: dict

    def to_dict(self) -> dict:
        return dict(self.__dict__)


def centralization_report(mapping: pd.DataFrame) -> CentralizationReport:
    from .topology import rpki_exposure
    if len(mapping) == 0:
        raise ValueError("empty mapping")
    return CentralizationReport(
        validators=len(mapping),
        prefixes=int(mapping["prefix"].nunique()),
        ases=int(mapping["asn"].nunique()),
        countries=int(mapping["country"].nunique()),
        prefixes_for_third=min_groups_for_fraction(mapping, 1 / 3, "prefix"),
        share_top100_prefixes=top_share(mapping, 100, "prefix"),
        share_top1_as=top_share(mapping, 1, "asn"),
        share_top3_as=top_share(mapping, 3, "asn"),
        share_top20_as=top_share(mapping, 20, "asn"),
        share_top1_country=top_share(mapping, 1, "country"),
        rpki=rpki_exposure(mapping),
    )


# ---------------------------------------------------------------- mainnet-shaped distribution

def _zipf_mandelbrot(n: int, q: float, s: float) -> np.ndarray:
    return (np.arange(1, n + 1) + q) ** -s


def heavy_head_counts(total: int = MAINNET_VALIDATORS, n_prefixes: int = 4600, top1_share: float = 37_000 / MAINNET_VALIDATORS,
                      top29_share: float = 0.3345, top100_share: float = 0.60) -> np.ndarray:
    """Per-prefix validator counts, descending, with the given head concentration.

    The first 100 prefixes follow a Zipf-Mandelbrot law fitted so that the
    largest holds ``top1_share`` and the top 29 / top 100 hit the stated shares;
    the remaining prefixes share the rest along a flatter power law.
    """
    head_total = int(round(top100_share * total))
    top1 = top1_share * total
    want29 = top29_share * total

    def top29_for(s, q):
        w = _zipf_mandelbrot(100, q, s)
        w = w / w.sum() * head_total
        return w

    def solve_q(s):
        # q so that the largest prefix holds top1
        return brentq(lambda q: top29_for(s, q)[0] - top1, -0.999, 500.0)

    s = brentq(lambda s: top29_for(s, solve_q(s))[:29].sum() - want29, 0.4, 2.0)
    head = top29_for(s, solve_q(s))
    head_c = np.floor(head).astype(np.int64)
    head_c[: head_total - head_c.sum()] += 1

    tail_n = n_prefixes - 100
    tail_total = total - head_total
    tail_w = _zipf_mandelbrot(tail_n, 50.0, 1.0)
    tail_c = np.floor(tail_w / tail_w.sum() * tail_total).astype(np.int64)
    tail_c = np.maximum(tail_c, 1)
    diff = tail_total - tail_c.sum()
    tail_c[: abs(diff)] += np.sign(diff)
    cap = head_c[-1]
    if tail_c.max() > cap:
        raise ValueError("tail exceeds head; adjust shape parameters")
    counts = np.concatenate([head_c, tail_c])
    return np.sort(counts)[::-1]


def _greedy_fill(weights: np.ndarray, targets: np.ndarray) -> np.ndarray:
    """Assign items (descending weight) to the bin with the largest remaining deficit.

    Every bin first receives one item from the smallest items so none is empty.
    """
    n_bins = len(targets)
    assign = np.full(len(weights), -1, dtype=np.int64)
    order = np.argsort(-weights, kind="stable")
    reserve = order[-n_bins:]
    heap = [(-float(t), b) for b, t in enumerate(targets)]
    heapq.heapify(heap)
    for i in order[:-n_bins]:
        d, b = heapq.heappop(heap)
        assign[i] = b
        heapq.heappush(heap, (d + float(weights[i]), b))
    # smallest items go to the bins with the most remaining deficit
    rem = sorted(((d, b) for d, b in heap))
    for i, (_, b) in zip(reserve[::-1], rem):
        assign[i] = b
    return assign


def as_targets(n_as: int = 1057, top=(0.27, 0.14, 0.10), top20_share: float = 0.81) -> np.ndarray:
    mid = np.arange(1, 18, dtype=float) ** -0.9
    mid = mid / mid.sum() * (top20_share - sum(top))
    tail = np.arange(1, n_as - 19, dtype=float) ** -1.1
    tail = tail / tail.sum() * (1 - top20_share)
    return np.concatenate([top, mid, tail])


COUNTRY_SHARES = {"US": 0.37, "DE": 0.14, "FR": 0.09, "GB": 0.06, "NL": 0.05, "SG": 0.04,
                  "JP": 0.035, "CA": 0.03, "FI": 0.025, "KR": 0.025, "IE": 0.02, "CH": 0.02,
                  "AU": 0.015, "PL": 0.013, "BR": 0.012, "IN": 0.01, "SE": 0.01, "ZA": 0.01}


def mainnet_shaped_config(seed: int = 0, total: int = MAINNET_VALIDATORS) -> TopologyConfig:
    """Topology config whose placement mirrors measured mainnet concentration."""
    counts = heavy_head_counts(total)
    n_pref = len(counts)
    targets = as_targets()
    prefix_as = _greedy_fill(counts.astype(float), targets * total)
    as_weight = np.bincount(prefix_as, weights=counts, minlength=len(targets))
    codes = list(COUNTRY_SHARES)
    shares = np.array([COUNTRY_SHARES[c] for c in codes])
    shares = shares / shares.sum()
    as_country_idx = _greedy_fill(as_weight, shares * total)
    as_country = [codes[i] for i in as_country_idx]

    nodes_per_prefix = 1 + counts // 5000
    # RPKI labels: quota by node count, seeded prefix order
    rng = rng_for(seed, "mainnet-rpki")
    quotas = np.array([1 - 0.2698 - 0.1387, 0.2698, 0.1387]) * nodes_per_prefix.sum()
    labels = np.empty(n_pref, dtype=object)
    filled = np.zeros(3)
    statuses = [s.value for s in RPKIStatus]
    for p in rng.permutation(n_pref):
        k = int(np.argmax(quotas - filled))
        labels[p] = statuses[k]
        filled[k] += nodes_per_prefix[p]
    return TopologyConfig(
        n_as=len(targets), validators=int(total), placement="table",
        prefix_table=counts.tolist(), prefix_as=prefix_as.tolist(),
        nodes_per_prefix=nodes_per_prefix.tolist(), prefix_rpki=list(labels),
        as_country=as_country, as_graph="hierarchy", seed=seed)


def mainnet_shaped_mapping(seed: int = 0, total: int = MAINNET_VALIDATORS) -> pd.DataFrame:
    return topology_mapping(build_topology(mainnet_shaped_config(seed, total)))


def uniform_mapping(n_prefixes: int, per_prefix: int) -> pd.DataFrame:
    vid = np.arange(n_prefixes * per_prefix)
    p = vid // per_prefix
    return pd.DataFrame({
        "validator_id": vid,
        "prefix": [f"10.{i}.0.0/16" for i in p],
        "asn": pd.array(64512 + p, dtype="Int64"),
        "rpki_status": "valid",
        "country": "US",
    })
