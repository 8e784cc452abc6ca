"""Gossipsub-lite propagation: per-topic meshes, fanout publishing by
unsubscribed origins, and heartbeat-quantized IHAVE / pull delivery.

Arrival times over a topic mesh are shortest paths whose edge weights are
link latency plus a per-hop processing jitter drawn per message.  Many
messages on the same topic are solved at once as disjoint copies of the
mesh in one sparse graph.
"""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field

import numpy as np
import pandas as pd
from scipy.sparse import csr_matrix
from scipy.sparse.csgraph import dijkstra

from .rng import rng_for
from .topology import N_TOPICS, HijackSchedule, Topology

RECORD_COLUMNS = ["message_id", "validator_id", "sender", "receiver", "rx_ms", "slot", "channel",
                  "sender_subscribed", "previously_advertised"]
OBSERVER = -1           # receiver id used for the passive observer


class MessageKind(str, enum.Enum):
    ATTESTATION = "attestation"
    BLOCK = "block"
    IHAVE = "ihave_advert"


class Channel(str, enum.Enum):
    MESH = "mesh_eager"
    FANOUT = "fanout"
    IHAVE = "ihave_then_pull"


@dataclass(frozen=True)
class GossipParams:
    heartbeat_ms: float = 1000.0
    mesh_degree: int = 8
    fanout_size: int = 6
    peer_count: int = 30
    attestation_offset_ms: float = 4000.0   # attestations go out a third into the slot
    origin_delay_ms: float = 5.0            # exponential mean of signing / publish delay
    pull_round_trips: float = 2.0           # IWANT request + response after an IHAVE
    slot_ms: float = 12000.0
    churn_rate: float = 0.0                 # share of mesh picks redrawn every epoch

    def __post_init__(self):
        if self.heartbeat_ms <= 0:
            raise ValueError("heartbeat interval must be positive")
        if self.mesh_degree < 1 or self.fanout_size < 1:
            raise ValueError("mesh degree and fanout size must be >= 1")
        if not 0 <= self.churn_rate <= 1:
            raise ValueError("churn_rate must be in [0, 1]")


@dataclass(frozen=True)
class GossipMessage:
    message_id: int
    kind: MessageKind
    topic_id: int
    origin_node: int
    slot: int
    origin_ts: float
    validator_id: int = -1

    def __post_init__(self):
        if not 0 <= self.topic_id < N_TOPICS:
            raise ValueError(f"topic {self.topic_id} outside [0, {N_TOPICS})")


@dataclass(frozen=True)
class DeliveryRecord:
    message_id: int
    receiver_node: int
    sender_node: int
    rx_ts: float
    channel: Channel
    sender_subscribed: bool
    previously_advertised: bool


# ---------------------------------------------------------------- heartbeat

@dataclass(frozen=True)
class HeartbeatSchedule:
    interval_ms: float
    phase_ms: float = 0.0

    def next_boundary(self, t):
        """First boundary at or after ``t`` (scalar or array)."""
        k = np.ceil((np.asarray(t, dtype=float) - self.phase_ms) / self.interval_ms)
        out = k * self.interval_ms + self.phase_ms
        return float(out) if np.ndim(out) == 0 else out

    def batch_index(self, t):
        """Index of the advert batch carrying a message held since ``t``."""
        k = np.ceil((np.asarray(t, dtype=float) - self.phase_ms) / self.interval_ms).astype(np.int64)
        return int(k) if np.ndim(k) == 0 else k


def heartbeat_schedule(params: GossipParams) -> HeartbeatSchedule:
    return HeartbeatSchedule(params.heartbeat_ms)


# ---------------------------------------------------------------- overlay

class Overlay:
    """Peer graph and per-topic meshes, fixed per seed."""

    def __init__(self, topology: Topology, params: GossipParams = GossipParams(), seed: int = 0):
        self.topology = topology
        self.params = params
        self.seed = seed
        n = topology.n_nodes
        subs = np.zeros((n, N_TOPICS), dtype=bool)
        for node in topology.nodes:
            subs[node.node_id, list(node.subscribed_topics)] = True
        self.subscribed = subs
        self.latency = topology.base_latency_matrix()
        self.jitter_mean = topology.jitter_means()
        rng = rng_for(seed, "peers")
        k = min(params.peer_count // 2, n - 1)
        peers = np.zeros((n, n), dtype=bool)
        for a in range(n):
            if k <= 0:
                break
            others = rng.choice(n - 1, size=k, replace=False)
            others[others >= a] += 1
            peers[a, others] = True
        self.peers = peers | peers.T
        self._mesh_cache = {}

    def subscribers(self, topic: int) -> np.ndarray:
        return np.flatnonzero(self.subscribed[:, topic])

    def mesh_edges(self, topic: int, epoch: int = 0) -> np.ndarray:
        """Undirected mesh edges (global node ids) for ``topic``."""
        bucket = epoch if self.params.churn_rate > 0 else 0
        key = (topic, bucket)
        if key in self._mesh_cache:
            return self._mesh_cache[key]
        subs = self.subscribers(topic)
        m = len(subs)
        half = max(1, self.params.mesh_degree // 2)
        picks = {}
        rng = rng_for(self.seed, "mesh", topic)
        for i in range(m):
            k = min(half, m - 1)
            if k <= 0:
                continue
            c = rng.choice(m - 1, size=k, replace=False)
            c[c >= i] += 1
            picks[i] = c
        if bucket:
            rng_e = rng_for(self.seed, "mesh-churn", topic, bucket)
            for i in picks:
                if rng_e.random() < self.params.churn_rate:
                    c = rng_e.choice(m - 1, size=len(picks[i]), replace=False)
                    c[c >= i] += 1
                    picks[i] = c
        edges = set()
        for i, c in picks.items():
            for j in c:
                a, b = (i, int(j)) if i < j else (int(j), i)
                edges.add((subs[a], subs[b]))
        arr = np.array(sorted(edges), dtype=np.int64).reshape(-1, 2)
        self._mesh_cache[key] = arr
        return arr

    def fanout_candidates(self, origin: int, topic: int) -> np.ndarray:
        cand = np.flatnonzero(self.peers[origin] & self.subscribed[:, topic])
        return cand[cand != origin]


# ---------------------------------------------------------------- propagation core

def _mesh_arrivals(overlay: Overlay, topic: int, epoch: int, origins: np.ndarray,
                   fanout: list, reach: np.ndarray | None, rng) -> np.ndarray:
    """Arrival offset (ms after publish) at every node for each copy.

    ``fanout[k]`` lists first-hop targets when origin k is not subscribed,
    or is None when the origin pushes into the mesh itself.  Returns a
    (K, n) array with inf for nodes the message never reaches.
    """
    n = overlay.topology.n_nodes
    K = len(origins)
    e = overlay.mesh_edges(topic, epoch)
    src = np.r_[e[:, 0], e[:, 1]]
    dst = np.r_[e[:, 1], e[:, 0]]
    rows, cols, w = [], [], []
    for k in range(K):
        s, d = src, dst
        fo = fanout[k]
        if fo is not None and len(fo):
            s = np.r_[s, np.full(len(fo), origins[k])]
            d = np.r_[d, fo]
        if reach is not None:
            ok = reach[s, d]
            s, d = s[ok], d[ok]
        wk = overlay.latency[s, d] + rng.exponential(1.0, size=len(s)) * overlay.jitter_mean[d]
        rows.append(s + k * n)
        cols.append(d + k * n)
        w.append(np.maximum(wk, 1e-9))
    if K == 0:
        return np.zeros((0, n))
    g = csr_matrix((np.concatenate(w), (np.concatenate(rows), np.concatenate(cols))),
                   shape=(K * n, K * n))
    dist = dijkstra(g, directed=True, indices=origins + np.arange(K) * n, min_only=True)
    return dist.reshape(K, n)


def propagate(msg: GossipMessage, topology: Topology, connectivity: HijackSchedule | None = None,
              params: GossipParams = GossipParams(), overlay: Overlay | None = None,
              seed: int = 0) -> list:
    """First-arrival delivery record for every node the message reaches."""
    overlay = overlay or Overlay(topology, params, seed)
    rng = rng_for(seed, "propagate", msg.message_id)
    epoch = msg.slot // 32
    origin = msg.origin_node
    subscribed = bool(overlay.subscribed[origin, msg.topic_id])
    fo = None
    if not subscribed:
        cand = overlay.fanout_candidates(origin, msg.topic_id)
        fo = cand if len(cand) <= params.fanout_size else rng.choice(cand, params.fanout_size,
                                                                      replace=False)
        fo = np.sort(fo)
    reach = connectivity.reachable(msg.slot) if connectivity is not None else None
    n = topology.n_nodes
    e = overlay.mesh_edges(msg.topic_id, epoch)
    s = np.r_[e[:, 0], e[:, 1]]
    d = np.r_[e[:, 1], e[:, 0]]
    if fo is not None:
        s = np.r_[s, np.full(len(fo), origin)]
        d = np.r_[d, fo]
    if reach is not None:
        ok = reach[s, d]
        s, d = s[ok], d[ok]
    w = overlay.latency[s, d] + rng.exponential(1.0, size=len(s)) * overlay.jitter_mean[d]
    g = csr_matrix((np.maximum(w, 1e-9), (s, d)), shape=(n, n))
    dist, pred = dijkstra(g, directed=True, indices=origin, return_predecessors=True)
    hb = heartbeat_schedule(params)
    fo_set = set() if fo is None else set(fo.tolist())
    out = []
    for v in range(n):
        if v == origin:
            continue
        if math.isfinite(dist[v]):
            u = int(pred[v])
            if u == origin and v in fo_set:
                out.append(DeliveryRecord(msg.message_id, v, u, msg.origin_ts + dist[v],
                                          Channel.FANOUT, False, False))
            else:
                out.append(DeliveryRecord(msg.message_id, v, u, msg.origin_ts + dist[v],
                                          Channel.MESH, bool(overlay.subscribed[u, msg.topic_id]),
                                          False))
    # subscribed peers outside the mesh's reach pull after an IHAVE from a holder
    have = np.isfinite(dist)
    for v in np.flatnonzero(overlay.subscribed[:, msg.topic_id] & ~have):
        holders = np.flatnonzero(have & overlay.peers[v])
        if reach is not None:
            holders = holders[reach[holders, v]]
        if len(holders) == 0:
            continue
        t_hold = msg.origin_ts + dist[holders]
        t_rx = hb.next_boundary(t_hold) + params.pull_round_trips * overlay.latency[holders, v]
        j = int(np.argmin(t_rx))
        out.append(DeliveryRecord(msg.message_id, int(v), int(holders[j]), float(t_rx[j]),
                                  Channel.IHAVE, True, True))
    return out


# ---------------------------------------------------------------- observer traces

@dataclass(frozen=True)
class ObserverConfig:
    as_index: int = 0
    graft_accept_prob: float = 0.85
    stagger_epochs: int = 0
    min_observe_epochs: int = 3
    cap_epochs: int = 8
    jitter_mean_ms: float = 2.0

    def __post_init__(self):
        if not 0 <= self.graft_accept_prob <= 1:
            raise ValueError("graft_accept_prob must be in [0, 1]")
        if self.cap_epochs < 1 or self.min_observe_epochs < 0:
            raise ValueError("observation epochs must be positive")


@dataclass
class TraceSet:
    """Deliveries addressed to the observer plus what generated them."""
    records: pd.DataFrame
    messages: pd.DataFrame
    window_start_ms: np.ndarray
    epochs: int
    params: GossipParams
    observer: ObserverConfig
    extra: dict = field(default_factory=dict)


def observer_latency(topology: Topology, as_index: int) -> np.ndarray:
    ai = topology.node_as_index
    lat = topology.as_distance[ai, as_index].copy()
    lat[ai == as_index] = topology.config.intra_as_latency_ms
    return lat


def attestation_traces(topology: Topology, committees, epochs: int, params: GossipParams = GossipParams(),
                       observer: ObserverConfig = ObserverConfig(), seed: int = 0,
                       schedule: HijackSchedule | None = None, proxy_broadcast: bool = False,
                       chunk: int = 256) -> TraceSet:
    """Publish every validator's attestation for ``epochs`` epochs and log
    what a passive, fully connected observer receives.

    ``committees(epoch)`` returns (slot_in_epoch, topic) arrays indexed by
    validator id.  Each peer connects to the observer at a start drawn from
    [0, stagger_epochs] epochs and stays for ``cap_epochs`` epochs; finalization is applied in collection.
    """
    overlay = Overlay(topology, params, seed)
    n = topology.n_nodes
    hb = heartbeat_schedule(params)
    obs_lat = observer_latency(topology, observer.as_index)
    epoch_ms = 32 * params.slot_ms
    rng_w = rng_for(seed, "observer-windows")
    win_start = rng_w.integers(0, observer.stagger_epochs + 1, size=n) * epoch_ms
    win_end = win_start + observer.cap_epochs * epoch_ms
    grafted = rng_for(seed, "observer-grafts").random((n, N_TOPICS)) < observer.graft_accept_prob

    vnode = topology.validator_node
    nv = len(vnode)
    msg_cols = {k: [] for k in ("message_id", "validator_id", "origin_node", "topic", "slot",
                                "origin_ts", "host_node")}
    for e in range(epochs):
        slots, topics = committees(e)
        slot_abs = e * 32 + np.asarray(slots, dtype=np.int64)
        rng_o = rng_for(seed, "origin", e)
        ts = slot_abs * params.slot_ms + params.attestation_offset_ms + rng_o.exponential(
            params.origin_delay_ms, size=nv)
        origin = vnode.copy()
        if proxy_broadcast:
            origin = rng_for(seed, "proxy", e).integers(n, size=nv)
        msg_cols["message_id"].append(e * nv + np.arange(nv))
        msg_cols["validator_id"].append(np.arange(nv))
        msg_cols["origin_node"].append(origin)
        msg_cols["topic"].append(np.asarray(topics, dtype=np.int64))
        msg_cols["slot"].append(slot_abs)
        msg_cols["origin_ts"].append(ts)
        msg_cols["host_node"].append(vnode)
    messages = pd.DataFrame({k: np.concatenate(v) if v else np.zeros(0) for k, v in msg_cols.items()})

    parts = []
    for (e, topic), grp in messages.groupby([messages.slot // 32, "topic"], sort=True):
        idx = grp.index.to_numpy()
        for c0 in range(0, len(idx), chunk):
            sel = idx[c0: c0 + chunk]
            parts.append(_observer_chunk(overlay, messages.loc[sel], int(e), int(topic), obs_lat,
                                         grafted, win_start, win_end, hb, params, observer,
                                         schedule, rng_for(seed, "chunk", int(e), int(topic), c0)))
    records = pd.concat(parts, ignore_index=True) if parts else _empty_records()
    records = records.sort_values(["message_id", "rx_ms", "sender"], kind="stable", ignore_index=True)
    return TraceSet(records, messages, win_start, epochs, params, observer)


def _empty_records() -> pd.DataFrame:
    return pd.DataFrame({
        "message_id": pd.Series(dtype="int64"), "validator_id": pd.Series(dtype="int64"),
        "sender": pd.Series(dtype="int64"), "receiver": pd.Series(dtype="int64"),
        "rx_ms": pd.Series(dtype="float64"), "slot": pd.Series(dtype="int64"),
        "channel": pd.Series(dtype="str"), "sender_subscribed": pd.Series(dtype="bool"),
        "previously_advertised": pd.Series(dtype="bool"), "origin_ts": pd.Series(dtype="float64"),
        "sender_rx_ms": pd.Series(dtype="float64"), "link_ms": pd.Series(dtype="float64"),
    })


def _observer_chunk(overlay, msgs, epoch, topic, obs_lat, grafted, win_start, win_end, hb,
                    params, observer, schedule, rng) -> pd.DataFrame:
    n = overlay.topology.n_nodes
    origins = msgs.origin_node.to_numpy()
    ts = msgs.origin_ts.to_numpy()
    slots = msgs.slot.to_numpy()
    K = len(origins)
    origin_sub = overlay.subscribed[origins, topic]
    fanout, obs_in_fanout = [], np.zeros(K, dtype=bool)
    for k in range(K):
        if origin_sub[k]:
            fanout.append(None)
            continue
        o = origins[k]
        cand = overlay.fanout_candidates(o, topic)
        connected = win_start[o] <= ts[k] < win_end[o]
        pool = np.r_[cand, OBSERVER] if connected else cand
        pick = pool if len(pool) <= params.fanout_size else rng.choice(pool, params.fanout_size,
                                                                        replace=False)
        obs_in_fanout[k] = bool(np.any(pick == OBSERVER))
        fanout.append(np.sort(pick[pick != OBSERVER]))
    if schedule is None or not schedule.actions:
        dist = _mesh_arrivals(overlay, topic, epoch, origins, fanout, None, rng)
    else:
        dist = np.empty((K, n))
        for s in np.unique(slots):
            sel = np.flatnonzero(slots == s)
            dist[sel] = _mesh_arrivals(overlay, topic, epoch, origins[sel], [fanout[i] for i in sel],
                                       schedule.reachable(int(s)), rng)

    subs = overlay.subscribers(topic)
    # observer-facing deliveries from subscribed peers
    t_have = ts[:, None] + dist[:, subs]                     # (K, S)
    ok = np.isfinite(t_have) & (win_start[subs][None, :] <= t_have) & (t_have < win_end[subs][None, :])
    if schedule is not None and schedule.actions:
        iso = np.vstack([schedule.isolated_nodes(int(s)) for s in slots])[:, subs]
        ok &= ~iso
    g = grafted[subs, topic][None, :].repeat(K, 0)
    link = obs_lat[subs][None, :] + rng.exponential(observer.jitter_mean_ms, size=(K, len(subs)))
    rx_mesh = t_have + link
    rx_pull = hb.next_boundary(t_have) + params.pull_round_trips * obs_lat[subs][None, :] + (
        link - obs_lat[subs][None, :])
    rx = np.where(g, rx_mesh, rx_pull)
    first_advert = np.where(ok & ~g, hb.next_boundary(t_have) + obs_lat[subs][None, :], np.inf).min(1)

    kk, ss = np.nonzero(ok)
    chan = np.where(g[kk, ss], Channel.MESH.value, Channel.IHAVE.value)
    prev = ~g[kk, ss] | (rx[kk, ss] > first_advert[kk])
    out = {
        "message_id": msgs.message_id.to_numpy()[kk],
        "validator_id": msgs.validator_id.to_numpy()[kk],
        "sender": subs[ss],
        "receiver": np.full(len(kk), OBSERVER),
        "rx_ms": rx[kk, ss],
        "slot": slots[kk],
        "channel": chan,
        "sender_subscribed": np.ones(len(kk), dtype=bool),
        "previously_advertised": prev,
        "origin_ts": ts[kk],
        "sender_rx_ms": t_have[kk, ss],
        "link_ms": link[kk, ss],
    }
    # fanout pushes straight from unsubscribed origins
    fk = np.flatnonzero(obs_in_fanout)
    if schedule is not None and schedule.actions and len(fk):
        fk = np.array([k for k in fk if not schedule.isolated_nodes(int(slots[k]))[origins[k]]],
                      dtype=np.int64)
    if len(fk):
        o = origins[fk]
        flink = obs_lat[o] + rng.exponential(observer.jitter_mean_ms, size=len(fk))
        frx = ts[fk] + flink
        fo = {
            "message_id": msgs.message_id.to_numpy()[fk], "validator_id": msgs.validator_id.to_numpy()[fk],
            "sender": o, "receiver": np.full(len(fk), OBSERVER), "rx_ms": frx, "slot": slots[fk],
            "channel": np.full(len(fk), Channel.FANOUT.value), "sender_subscribed": np.zeros(len(fk), bool),
            "previously_advertised": frx > first_advert[fk], "origin_ts": ts[fk],
            "sender_rx_ms": ts[fk], "link_ms": flink,
        }
        out = {k: np.r_[out[k], fo[k]] for k in out}
    return pd.DataFrame(out)


# ---------------------------------------------------------------- countermeasures

def countermeasure_transform(records: pd.DataFrame, mode, seed: int = 0,
                             params: GossipParams = GossipParams(), n_nodes: int | None = None) -> pd.DataFrame:
    """Rewrite observer-side records as if a countermeasure were deployed.

    ``mode`` is "none", "disable_eager_oos", "proxy_broadcast" or
    ("add_latency", mean_ms).  No transform ever makes a delivery earlier.
    """
    name, arg = (mode, None) if isinstance(mode, str) else (mode[0], mode[1])
    out = records.copy()
    if name == "none":
        return out
    if name == "add_latency":
        if arg is None or not arg > 0:
            raise ValueError(f"add_latency needs a positive mean, got {arg}")
        mids = out["message_id"].to_numpy()
        uniq, inv = np.unique(mids, return_inverse=True)
        delay = rng_for(seed, "cm-latency").exponential(arg, size=len(uniq))
        out["rx_ms"] = out["rx_ms"].to_numpy() + delay[inv]
        if "sender_rx_ms" in out:
            out["sender_rx_ms"] = out["sender_rx_ms"].to_numpy() + delay[inv]
        return out
    if name == "disable_eager_oos":
        out = out[out["channel"] != Channel.FANOUT.value].copy()
        hb = heartbeat_schedule(params)
        pulled = hb.next_boundary(out["sender_rx_ms"].to_numpy()) + params.pull_round_trips * out[
            "link_ms"].to_numpy()
        out["rx_ms"] = np.maximum(out["rx_ms"].to_numpy(), pulled)
        out["channel"] = Channel.IHAVE.value
        out["previously_advertised"] = True
        return out.reset_index(drop=True)
    if name == "proxy_broadcast":
        if "origin_node" not in out:
            return out
        if n_nodes is None:
            raise ValueError("proxy_broadcast needs the node count")
        mids = out["message_id"].to_numpy()
        uniq, inv = np.unique(mids, return_inverse=True)
        relay = rng_for(seed, "cm-proxy").integers(n_nodes, size=len(uniq))
        out["origin_node"] = relay[inv]
        return out
    raise ValueError(f"unknown countermeasure {name!r}")


def export_records_csv(records: pd.DataFrame, path) -> None:
    df = records[RECORD_COLUMNS].copy()
    df["rx_ms"] = df["rx_ms"].map(lambda x: f"{x:.6f}")
    df.to_csv(path, index=False, lineterminator="\n")
