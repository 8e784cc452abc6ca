"""End-to-end mapping: traces -> candidates -> seeds -> classifier -> validator prefixes."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import pandas as pd

from ..consensus import committee_assignment
from ..gossip import GossipParams, ObserverConfig, TraceSet, attestation_traces, countermeasure_transform
from ..rng import derive_seed
from ..topology import Topology, TopologyConfig, build_topology
from .candidates import (CandidateSet, alt_heuristic, build_training_set, consecutive_id_seed,
                         shuffle_control, rank_candidates)
from .mlp import DegenerateDataError, MappingModel, ModelConfig, train
from .observe import collect

RESULT_COLUMNS = ["validator_id", "prefix_index", "confidence", "score"]


def default_network_config(seed: int = 7) -> TopologyConfig:
    """Synthetic network used for the inference experiments (220 nodes, 2,400 validators)."""
    return TopologyConfig(n_as=30, prefixes_per_as=3, n_nodes=220, validators=2400, relay_fraction=0.3,
                          as_graph="hierarchy", max_validators_per_node=120, seed=seed)


def predict_all(model: MappingModel | None, candidates: CandidateSet, seeds: pd.Series) -> pd.DataFrame:
    """Seeded validators keep their seed; the rest take the model's argmax candidate.

    Validators without any eligible observation are absent from the result.
    """
    n = len(candidates)
    k = candidates.senders.shape[1]
    mask = candidates.senders >= 0
    if model is not None and n:
        proba = model.predict_proba(candidates.features, mask)
    else:
        # no model: trust latency order
        proba = np.zeros((n, k))
        proba[:, 0] = 1.0
    best = np.argmax(proba, axis=1)
    rows = np.arange(n)
    prefix = candidates.prefixes[rows, best]
    score = proba[rows, best]
    conf = np.full(n, "model", dtype=object)
    seeded = np.isin(candidates.validator_ids, seeds.index.to_numpy())
    if seeded.any():
        sv = candidates.validator_ids[seeded]
        prefix = prefix.copy()
        prefix[seeded] = seeds.loc[sv].to_numpy()
        score[seeded] = 1.0
        conf[seeded] = "seeded"
    return pd.DataFrame({"validator_id": candidates.validator_ids, "prefix_index": prefix,
                         "confidence": conf, "score": score})


def mapping_accuracy(result: pd.DataFrame, true_prefix: np.ndarray) -> float:
    """Share of all validators mapped to their true prefix; unmapped ones count as wrong."""
    true_prefix = np.asarray(true_prefix)
    if len(true_prefix) == 0:
        return float("nan")
    hit = true_prefix[result["validator_id"].to_numpy()] == result["prefix_index"].to_numpy()
    return float(hit.sum() / len(true_prefix))


def result_mapping(result: pd.DataFrame, topology: Topology) -> pd.DataFrame:
    """MappingResult in the validator mapping CSV schema."""
    pf = topology.prefixes
    idx = result["prefix_index"].to_numpy()
    asn_of = {p.prefix_id: p.origin_asn for p in pf}
    out = pd.DataFrame({
        "validator_id": result["validator_id"].to_numpy().astype("int64"),
        "prefix": [pf[i].prefix_id for i in idx],
    })
    out["asn"] = pd.array([asn_of[p] for p in out["prefix"]], dtype="Int64")
    out["rpki_status"] = [pf[i].rpki.value for i in idx]
    out["country"] = [pf[i].country or "" for i in idx]
    return out


@dataclass
class InferenceRun:
    candidates: CandidateSet
    seeds: pd.Series
    seed_coverage: float
    shuffled_coverage: float
    training: object
    model: MappingModel | None
    metrics: dict
    result: pd.DataFrame
    accuracy: float
    top10_hit: float
    alt: pd.DataFrame = field(default=None)


def run_pipeline(topology: Topology, traces: TraceSet, records=None, seed: int = 0,
                 model_config: ModelConfig = ModelConfig(), threshold: float = 0.2) -> InferenceRun:
    """collect -> rank -> seed -> shuffle control -> filter -> train -> predict -> evaluate."""
    log = collect(traces, records)
    cands = rank_candidates(log, topology.node_prefix_index, np.arange(topology.n_validators))
    seeds, cov = consecutive_id_seed(cands)
    shuf = shuffle_control(cands, derive_seed(seed, "shuffle"))
    ts = build_training_set(seeds, topology.validator_cluster, cands, _prefix_as(topology), threshold)
    model, metrics = None, {"n_train": 0, "n_holdout": 0, "holdout_accuracy": float("nan")}
    try:
        model, metrics = train(ts, derive_seed(seed, "train"), model_config)
    except DegenerateDataError as exc:
        metrics["error"] = str(exc)
    metrics.update(drop_rate=ts.drop_rate, training_examples=int(len(ts.y)))
    result = predict_all(model, cands, seeds)
    true_prefix = topology.validator_prefix()
    acc = mapping_accuracy(result, true_prefix)
    host = topology.validator_node[cands.validator_ids]
    top10 = float((cands.senders == host[:, None]).any(1).sum() / max(topology.n_validators, 1))
    return InferenceRun(cands, seeds, cov, shuf, ts, model, metrics, result, acc, top10,
                        alt_heuristic(cands))


def _prefix_as(topology: Topology) -> np.ndarray:
    asn_index = {a.asn: i for i, a in enumerate(topology.ases)}
    return np.array([asn_index[p.origin_asn] for p in topology.prefixes], dtype=np.int64)


def generate_traces(topology: Topology, epochs: int = 20, seed: int = 0, params: GossipParams = GossipParams(),
                    observer: ObserverConfig = ObserverConfig(), proxy_broadcast: bool = False) -> TraceSet:
    if epochs < observer.min_observe_epochs:
        raise ValueError(f"trace length {epochs} epochs is shorter than the "
                         f"{observer.min_observe_epochs}-epoch observation minimum")
    active = np.ones(topology.n_validators, dtype=bool)
    cseed = derive_seed(seed, "committees")
    return attestation_traces(topology, lambda e: committee_assignment(cseed, e, active), epochs,
                              params, observer, derive_seed(seed, "gossip"),
                              proxy_broadcast=proxy_broadcast)


def countermeasure_eval(topology: Topology, modes, epochs: int = 20, seed: int = 0,
                        model_config: ModelConfig = ModelConfig(), traces: TraceSet | None = None) -> pd.DataFrame:
    """Accuracy per countermeasure mode on identical traces and seeds."""
    traces = traces or generate_traces(topology, epochs, seed)
    rows = []
    base = None
    for mode in modes:
        name = mode if isinstance(mode, str) else f"{mode[0]}:{mode[1]:g}"
        if mode == "proxy_broadcast":
            tr = generate_traces(topology, epochs, seed, traces.params, traces.observer, proxy_broadcast=True)
            run = run_pipeline(topology, tr, seed=seed, model_config=model_config)
        else:
            rec = countermeasure_transform(traces.records, mode, derive_seed(seed, "countermeasure"),
                                           traces.params, topology.n_nodes)
            run = run_pipeline(topology, traces, rec, seed=seed, model_config=model_config)
        if base is None and mode == "none":
            base = run.accuracy
        rows.append({"mode": name, "accuracy": run.accuracy, "seed_coverage": run.seed_coverage,
                     "mapped": len(run.result), "holdout_accuracy": run.metrics.get("holdout_accuracy")})
    out = pd.DataFrame(rows)
    out["delta"] = out["accuracy"] - (base if base is not None else np.nan)
    return out


def run_default(seed: int = 7, epochs: int = 20, model_config: ModelConfig = ModelConfig()) -> tuple:
    topo = build_topology(default_network_config(seed))
    traces = generate_traces(topo, epochs, seed)
    return topo, traces, run_pipeline(topo, traces, seed=seed, model_config=model_config)
