"""Candidate hosts per validator, consecutive-ID seeding and ownership filtering."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
import pandas as pd

from ..rng import rng_for
from .observe import ObservationLog

MAX_CANDIDATES = 10
FEATURES = ["min_ms", "median_ms", "eager_count", "oos_count", "total_count", "fastest_share"]


@dataclass
class CandidateSet:
    validator_ids: np.ndarray    # (V,)
    senders: np.ndarray          # (V, 10) node ids, -1 padded
    prefixes: np.ndarray         # (V, 10) prefix index, -1 padded
    features: np.ndarray         # (V, 10, F)
    excluded: np.ndarray         # validators with no eligible samples

    def __len__(self):
        return len(self.validator_ids)

    @property
    def lengths(self) -> np.ndarray:
        return (self.senders >= 0).sum(1)

    def row(self, validator_id: int) -> int:
        idx = np.searchsorted(self.validator_ids, validator_id)
        if idx >= len(self.validator_ids) or self.validator_ids[idx] != validator_id:
            raise KeyError(validator_id)
        return int(idx)

    def subset(self, rows) -> "CandidateSet":
        rows = np.asarray(rows)
        return CandidateSet(self.validator_ids[rows], self.senders[rows], self.prefixes[rows],
                            self.features[rows], self.excluded)

    def to_frame(self) -> pd.DataFrame:
        v, k = np.nonzero(self.senders >= 0)
        out = pd.DataFrame({"validator_id": self.validator_ids[v], "rank": k,
                            "sender": self.senders[v, k], "prefix_index": self.prefixes[v, k]})
        for j, name in enumerate(FEATURES):
            out[name] = self.features[v, k, j]
        return out


def rank_candidates(log: ObservationLog, node_prefix: np.ndarray, all_validators=None,
                    k: int = MAX_CANDIDATES) -> CandidateSet:
    """Top-k senders per validator by minimum relative latency.

    Ties go to the higher eager count, then the lower node id.
    """
    pairs = log.pairs.sort_values(["validator_id", "min_ms", "eager_count", "sender"],
                                  ascending=[True, True, False, True], kind="stable")
    pairs = pairs.assign(rank=pairs.groupby("validator_id").cumcount())
    pairs = pairs[pairs["rank"] < k]
    vids = np.unique(pairs["validator_id"].to_numpy())
    V = len(vids)
    row = np.searchsorted(vids, pairs["validator_id"].to_numpy())
    col = pairs["rank"].to_numpy()
    senders = np.full((V, k), -1, dtype=np.int64)
    senders[row, col] = pairs["sender"].to_numpy()
    prefixes = np.full((V, k), -1, dtype=np.int64)
    prefixes[row, col] = np.asarray(node_prefix)[pairs["sender"].to_numpy()]
    feats = np.zeros((V, k, len(FEATURES)))
    feats[row, col] = pairs[FEATURES].to_numpy(dtype=float)
    excluded = np.zeros(0, dtype=np.int64)
    if all_validators is not None:
        excluded = np.setdiff1d(np.asarray(all_validators), vids)
    return CandidateSet(vids, senders, prefixes, feats, excluded)


# ---------------------------------------------------------------- seeding

def consecutive_id_seed(candidates: CandidateSet, depth: int = 1) -> tuple:
    """Seed validators whose top candidate prefixes agree with an ID neighbour.

    For each pair of adjacent validator IDs the sets of their top ``depth``
    candidate prefixes are intersected; a single common prefix seeds both.
    Returns (Series validator_id -> prefix index, coverage fraction).
    """
    vids = candidates.validator_ids
    tops = candidates.prefixes[:, :depth]
    seeds = {}
    ambiguous = set()
    for i in range(len(vids) - 1):
        if vids[i + 1] != vids[i] + 1:
            continue
        a = set(tops[i][tops[i] >= 0].tolist())
        b = set(tops[i + 1][tops[i + 1] >= 0].tolist())
        common = a & b
        if len(common) != 1:
            continue
        p = next(iter(common))
        for v in (vids[i], vids[i + 1]):
            if v in seeds and seeds[v] != p:
                ambiguous.add(v)
            seeds[v] = p
    for v in ambiguous:
        seeds.pop(v, None)
    s = pd.Series(seeds, dtype="int64").sort_index()
    s.index.name = "validator_id"
    total = len(vids) + len(candidates.excluded)
    return s, (len(s) / total if total else 0.0)


def shuffle_control(candidates: CandidateSet, seed: int = 0, depth: int = 1) -> float:
    """Seeding coverage after a seeded permutation of validator IDs."""
    perm = rng_for(seed, "shuffle-control").permutation(len(candidates))
    shuffled = CandidateSet(candidates.validator_ids, candidates.senders[perm],
                            candidates.prefixes[perm], candidates.features[perm],
                            candidates.excluded)
    return consecutive_id_seed(shuffled, depth)[1]


# ---------------------------------------------------------------- ownership filter

def efficiency_score(distribution) -> float:
    """Shannon entropy of a distribution over ASes, normalized by log of its support size.

    >>> round(efficiency_score([0.7, 0.2, 0.1]), 4)
    0.7298
    """
    p = np.asarray(distribution, dtype=float)
    if p.size == 0 or p.sum() <= 0:
        raise ValueError("empty distribution")
    if np.any(p < 0):
        raise ValueError("negative mass in distribution")
    p = p[p > 0] / p.sum()
    k = len(p)
    if k == 1:
        return 0.0
    return float(min(1.0, max(0.0, -(p * np.log(p)).sum() / math.log(k))))


@dataclass
class TrainingSet:
    x: np.ndarray          # (M, 10, F)
    mask: np.ndarray       # (M, 10) valid candidate positions
    y: np.ndarray          # (M,) label position
    validator_ids: np.ndarray
    dropped: int
    considered: int
    cluster_efficiency: dict

    @property
    def drop_rate(self) -> float:
        return self.dropped / self.considered if self.considered else 0.0


def build_training_set(seeds: pd.Series, clusters, candidates: CandidateSet, prefix_as,
                       threshold: float = 0.2) -> TrainingSet:
    """Examples from seeded validators whose deposit cluster sits in (nearly) one AS.

    Label = first candidate position whose prefix equals the seeded prefix;
    seeds whose prefix is not among the candidates are dropped and counted.
    """
    clusters = np.asarray(clusters)
    prefix_as = np.asarray(prefix_as)
    sv = seeds.index.to_numpy()
    sp = seeds.to_numpy()
    cl = clusters[sv]
    eff = {}
    for c in np.unique(cl):
        ases = prefix_as[sp[cl == c]]
        eff[int(c)] = efficiency_score(np.bincount(ases))
    keep = np.array([eff[int(c)] <= threshold for c in cl], dtype=bool)
    xs, ms, ys, ids = [], [], [], []
    dropped = considered = 0
    for v, p in zip(sv[keep], sp[keep]):
        considered += 1
        r = candidates.row(int(v))
        hit = np.flatnonzero(candidates.prefixes[r] == p)
        if len(hit) == 0:
            dropped += 1
            continue
        xs.append(candidates.features[r])
        ms.append(candidates.senders[r] >= 0)
        ys.append(int(hit[0]))
        ids.append(int(v))
    F = candidates.features.shape[2]
    k = candidates.features.shape[1]
    return TrainingSet(np.array(xs).reshape(-1, k, F), np.array(ms, dtype=bool).reshape(-1, k),
                       np.array(ys, dtype=np.int64), np.array(ids, dtype=np.int64), dropped,
                       considered, eff)


# ---------------------------------------------------------------- alternative heuristic

def alt_heuristic(candidates: CandidateSet) -> pd.DataFrame:
    """Pick the candidate with the most OOS deliveries; lowest latency breaks ties.

    Validators whose candidates never sent OOS fall back to the fastest
    candidate and are flagged.
    """
    oos = candidates.features[:, :, FEATURES.index("oos_count")].copy()
    oos[candidates.senders < 0] = -1
    best = np.argmax(oos, axis=1)      # first max = lowest latency rank
    fallback = oos.max(axis=1) <= 0
    best[fallback] = 0
    rows = np.arange(len(candidates))
    return pd.DataFrame({
        "validator_id": candidates.validator_ids,
        "prefix_index": candidates.prefixes[rows, best],
        "sender": candidates.senders[rows, best],
        "fallback": fallback,
    })
