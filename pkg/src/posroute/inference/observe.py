"""Passive observer bookkeeping: which deliveries count as eager, what latency
they show, and when a peer has told us enough to be dropped."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import pandas as pd

from ..gossip import Channel, GossipParams, ObserverConfig, TraceSet


@dataclass
class ObservationLog:
    samples: pd.DataFrame    # eligible deliveries: validator_id, sender, rel_ms, oos, message_id
    pairs: pd.DataFrame      # per (validator_id, sender) aggregates
    peers: pd.DataFrame      # per sender: window_start, finalized, finalize_ts
    messages_seen: pd.Series  # validator_id -> distinct messages observed (any channel)

    def eligible_counts(self) -> pd.Series:
        return self.samples.groupby("validator_id").size()


def classify(records: pd.DataFrame) -> tuple:
    """(eager, oos) masks: eager pushes not already advertised, OOS = fanout from an unsubscribed sender."""
    ch = records["channel"].to_numpy()
    sub = records["sender_subscribed"].to_numpy()
    fresh = ~records["previously_advertised"].to_numpy()
    mesh = (ch == Channel.MESH.value) & sub
    oos = (ch == Channel.FANOUT.value) & ~sub
    return fresh & (mesh | oos), fresh & oos


def _finalize_times(rec: pd.DataFrame, eager: np.ndarray, win_start: np.ndarray,
                    cfg: ObserverConfig, epoch_ms: float) -> np.ndarray:
    """Per sender finalization time; window end when the rule never fires."""
    fin = win_start + cfg.cap_epochs * epoch_ms
    if len(rec) == 0:
        return fin
    # first deliverer of each message
    first = rec.drop_duplicates("message_id", keep="first")
    ff = first.groupby(["sender", "validator_id"])["rx_ms"].min()
    fe = rec[eager].groupby(["sender", "validator_id"])["rx_ms"].min()
    df = pd.DataFrame({"fast": ff}).join(pd.DataFrame({"eager": fe}), how="left")
    df["eager"] = df["eager"].fillna(np.inf)
    for u, g in df.groupby(level="sender"):
        fast = g["fast"].to_numpy()
        eag = g["eager"].to_numpy()
        t0 = max(win_start[u] + cfg.min_observe_epochs * epoch_ms, fast.min())
        cands = np.unique(np.r_[t0, eag[(eag >= t0) & np.isfinite(eag)]])
        for t in cands:
            if t >= fin[u]:
                break
            bad = (fast <= t) & (eag > t)
            if not bad.any():
                fin[u] = t
                break
    return fin


def collect(traces: TraceSet, records: pd.DataFrame | None = None,
            observer: ObserverConfig | None = None) -> ObservationLog:
    """Build the observation log from observer-side delivery records.

    ``records`` overrides ``traces.records`` (e.g. after a countermeasure
    transform).  A peer stops contributing once finalized (watched for the
    minimum number of epochs, and every validator it was ever first to
    deliver has an eager sample from it) or once its cap expires.
    """
    cfg = observer or traces.observer
    params: GossipParams = traces.params
    rec = traces.records if records is None else records
    rec = rec.sort_values(["rx_ms", "message_id", "sender"], kind="stable", ignore_index=True)
    epoch_ms = 32 * params.slot_ms
    win_start = np.asarray(traces.window_start_ms, dtype=float)
    eager, oos = classify(rec)
    fin = _finalize_times(rec, eager, win_start, cfg, epoch_ms)
    senders = rec["sender"].to_numpy()
    keep = rec["rx_ms"].to_numpy() <= fin[senders]
    rec, eager, oos = rec[keep], eager[keep], oos[keep]

    rel = rec["rx_ms"].to_numpy() - rec["slot"].to_numpy() * params.slot_ms
    first_mask = ~rec.duplicated("message_id", keep="first").to_numpy()
    samples = pd.DataFrame({
        "validator_id": rec["validator_id"].to_numpy()[eager],
        "sender": rec["sender"].to_numpy()[eager],
        "rel_ms": np.maximum(rel[eager], 0.0),
        "oos": oos[eager],
        "message_id": rec["message_id"].to_numpy()[eager],
    })
    base = pd.DataFrame({
        "validator_id": rec["validator_id"].to_numpy(),
        "sender": rec["sender"].to_numpy(),
        "first": first_mask,
    })
    tot = base.groupby(["validator_id", "sender"]).agg(total_count=("first", "size"),
                                                       first_count=("first", "sum"))
    g = samples.groupby(["validator_id", "sender"])
    agg = g.agg(eager_count=("rel_ms", "size"), oos_count=("oos", "sum"),
                min_ms=("rel_ms", "min"), median_ms=("rel_ms", "median"))
    pairs = agg.join(tot, how="left").reset_index()
    seen = base.assign(m=rec["message_id"].to_numpy()).groupby("validator_id")["m"].nunique()
    pairs["fastest_share"] = pairs["first_count"] / pairs["validator_id"].map(seen).to_numpy()
    pairs["oos_count"] = pairs["oos_count"].astype(np.int64)
    n = len(win_start)
    peers = pd.DataFrame({
        "sender": np.arange(n),
        "window_start": win_start,
        "finalize_ts": fin,
        "finalized": fin < win_start + cfg.cap_epochs * epoch_ms,
    })
    return ObservationLog(samples, pairs, peers, seen)
