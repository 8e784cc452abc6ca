"""AS / prefix / node network model with validator placement and hijack effects.

Hijacks are modeled by their effect on reachability: an on-path adversary
that drops packets between chosen node sets.  No BGP route computation.
"""
from __future__ import annotations

import csv
import enum
import ipaddress
import math
from dataclasses import dataclass, field, replace
from functools import cached_property
from typing import Iterable

import numpy as np
import pandas as pd
from scipy.sparse import csr_matrix
from scipy.sparse.csgraph import connected_components, shortest_path

from .rng import rng_for

N_TOPICS = 64
MAPPING_COLUMNS = ["validator_id", "prefix", "asn", "rpki_status", "country"]


class RPKIStatus(str, enum.Enum):
    VALID = "valid"
    PERMISSIVE = "permissive_maxlength"
    NO_ROA = "no_roa"


class HijackMode(str, enum.Enum):
    PARTITION_DROP = "partition_drop"
    PROPOSER_DROP = "proposer_drop"


class TopologyError(ValueError):
    pass


class MappingFormatError(ValueError):
    pass


@dataclass
class AutonomousSystem:
    asn: int
    name: str
    neighbors: dict = field(default_factory=dict)  # asn -> link latency (ms)


@dataclass(frozen=True)
class Prefix:
    prefix_id: str
    origin_asn: int
    length: int = 24
    rpki: RPKIStatus = RPKIStatus.NO_ROA
    country: str = ""

    def __post_init__(self):
        if not 8 <= self.length <= 32:
            raise TopologyError(f"prefix length {self.length} outside [8, 32]")


@dataclass
class NetNode:
    node_id: int
    prefix_id: str
    hosted_validators: list = field(default_factory=list)
    subscribed_topics: frozenset = frozenset()
    mesh_degree: int = 8
    jitter_mean_ms: float = 10.0

    def __post_init__(self):
        if self.mesh_degree < 1:
            raise TopologyError("mesh_degree must be >= 1")


@dataclass(frozen=True)
class HijackAction:
    """Drop traffic for nodes inside ``prefixes`` during slots [start, end] (inclusive)."""
    prefixes: frozenset
    start: int
    end: int
    mode: HijackMode = HijackMode.PARTITION_DROP
    success_prob: float = 1.0
    partition_membership: frozenset = frozenset()

    def __post_init__(self):
        object.__setattr__(self, "prefixes", frozenset(self.prefixes))
        object.__setattr__(self, "mode", HijackMode(self.mode))
        if not self.prefixes:
            raise TopologyError("hijack needs at least one prefix")
        if self.start > self.end:
            raise TopologyError(f"hijack start {self.start} after end {self.end}")
        if not 0.0 <= self.success_prob <= 1.0:
            raise TopologyError("success_prob must be in [0, 1]")

    def active(self, slot: int) -> bool:
        return self.start <= slot <= self.end

    def resolve(self, topology: "Topology") -> "HijackAction":
        members = frozenset(n.node_id for n in topology.nodes if n.prefix_id in self.prefixes)
        return replace(self, partition_membership=members)


# ---------------------------------------------------------------- config

@dataclass
class TopologyConfig:
    n_as: int = 20
    prefixes_per_as: object = 1          # int or per-AS list
    n_nodes: int | None = None           # default: one node per prefix
    validators: int = 1000
    placement: str = "heavy_tail"        # uniform | heavy_tail | table
    prefix_table: list | None = None     # validators per prefix (placement="table")
    prefix_as: list | None = None        # AS index per prefix, overrides prefixes_per_as
    nodes_per_prefix: list | None = None
    prefix_rpki: list | None = None      # explicit RPKI status per prefix
    as_country: list | None = None       # explicit country code per AS
    tail_alpha: float = 1.2
    relay_fraction: float = 0.0          # share of nodes hosting no validators
    max_validators_per_node: int | None = None
    as_graph: str = "full_mesh"          # full_mesh | hierarchy
    link_latency_ms: tuple = (5.0, 60.0)
    intra_as_latency_ms: float = 1.0
    jitter_mean_ms: float = 10.0
    mesh_degree: int = 8
    prefix_lengths: tuple = (16, 24)
    rpki_shares: tuple = (0.5915, 0.2698, 0.1387)   # valid, permissive, no ROA
    countries: tuple = ("US", "DE", "FR", "GB", "NL", "SG", "JP", "CA", "FI", "CH")
    batch_size: tuple = (4, 32)          # deposit batch size range, consecutive IDs per node
    operator_nodes: tuple = (1, 4)
    operator_mixing: float = 0.2         # chance an operator node sits outside its main AS
    subscribe_all_threshold: int = 64
    seed: int = 0

    @classmethod
    def from_dict(cls, d: dict) -> "TopologyConfig":
        known = {f for f in cls.__dataclass_fields__}
        bad = set(d) - known
        if bad:
            raise TopologyError(f"unknown topology config fields: {sorted(bad)}")
        kw = dict(d)
        for k in ("link_latency_ms", "prefix_lengths", "rpki_shares", "countries", "batch_size",
                  "operator_nodes"):
            if k in kw:
                kw[k] = tuple(kw[k])
        return cls(**kw)

    def to_dict(self) -> dict:
        out = {}
        for k in self.__dataclass_fields__:
            v = getattr(self, k)
            out[k] = list(v) if isinstance(v, tuple) else v
        return out


def uniform_config(n_prefixes: int, validators: int, seed: int = 0, **kw) -> TopologyConfig:
    return TopologyConfig(n_as=n_prefixes, prefixes_per_as=1, validators=validators,
                          placement="uniform", seed=seed, **kw)


# ---------------------------------------------------------------- topology

@dataclass
class Topology:
    config: TopologyConfig
    ases: list
    prefixes: list
    nodes: list
    validator_node: np.ndarray
    validator_cluster: np.ndarray
    as_links: np.ndarray        # (k, 3): asn index a, index b, latency

    def __post_init__(self):
        self._prefix_idx = {p.prefix_id: i for i, p in enumerate(self.prefixes)}
        self._as_idx = {a.asn: i for i, a in enumerate(self.ases)}

    # lookups
    @property
    def n_nodes(self) -> int:
        return len(self.nodes)

    @property
    def n_validators(self) -> int:
        return len(self.validator_node)

    def prefix(self, prefix_id: str) -> Prefix:
        return self.prefixes[self._prefix_idx[prefix_id]]

    @cached_property
    def node_prefix_index(self) -> np.ndarray:
        return np.array([self._prefix_idx[n.prefix_id] for n in self.nodes], dtype=np.int64)

    @cached_property
    def node_as_index(self) -> np.ndarray:
        pa = np.array([self._as_idx[p.origin_asn] for p in self.prefixes], dtype=np.int64)
        return pa[self.node_prefix_index]

    @cached_property
    def node_validator_counts(self) -> np.ndarray:
        return np.bincount(self.validator_node, minlength=self.n_nodes)

    def validators_per_prefix(self) -> np.ndarray:
        return np.bincount(self.node_prefix_index[self.validator_node], minlength=len(self.prefixes))

    def validator_prefix(self) -> np.ndarray:
        """Prefix index hosting each validator."""
        return self.node_prefix_index[self.validator_node]

    def jitter_means(self) -> np.ndarray:
        return np.array([n.jitter_mean_ms for n in self.nodes], dtype=float)

    # latency
    @cached_property
    def as_distance(self) -> np.ndarray:
        k = len(self.ases)
        if len(self.as_links) == 0:
            d = np.full((k, k), np.inf)
            np.fill_diagonal(d, 0.0)
            return d
        a = self.as_links[:, 0].astype(int)
        b = self.as_links[:, 1].astype(int)
        w = self.as_links[:, 2]
        g = csr_matrix((np.r_[w, w], (np.r_[a, b], np.r_[b, a])), shape=(k, k))
        return shortest_path(g, method="D", directed=False)

    def base_latency_matrix(self) -> np.ndarray:
        """Node-to-node base latency (ms), jitter excluded."""
        ai = self.node_as_index
        lat = self.as_distance[np.ix_(ai, ai)].copy()
        same_as = ai[:, None] == ai[None, :]
        lat[same_as] = self.config.intra_as_latency_ms
        np.fill_diagonal(lat, 0.0)
        return lat

    def base_latency(self, a: int, b: int) -> float:
        if a == b:
            return 0.0
        ia, ib = self.node_as_index[a], self.node_as_index[b]
        if ia == ib:
            return float(self.config.intra_as_latency_ms)
        d = float(self.as_distance[ia, ib])
        if not math.isfinite(d):
            raise TopologyError(f"no AS path between nodes {a} and {b}")
        return d

    def jitter(self, node: int, draw: int) -> float:
        mean = self.nodes[node].jitter_mean_ms
        if mean <= 0:
            return 0.0
        return float(rng_for(self.config.seed, "jitter", node, draw).exponential(mean))

    def path_latency(self, a: int, b: int, draw: int | None = None) -> float:
        """Base latency from a to b, plus the receiver's jitter draw ``draw`` if given."""
        self._check_node(a), self._check_node(b)
        lat = self.base_latency(a, b)
        if draw is not None and a != b:
            lat += self.jitter(b, draw)
        return lat

    def _check_node(self, n: int):
        if not 0 <= n < self.n_nodes:
            raise TopologyError(f"unknown node {n}")


# ---------------------------------------------------------------- build

def _as_graph(cfg: TopologyConfig, rng) -> np.ndarray:
    k = cfg.n_as
    lo, hi = cfg.link_latency_ms
    if lo <= 0 or hi < lo:
        raise TopologyError("link latency range must satisfy 0 < lo <= hi")
    links = []
    if cfg.as_graph == "full_mesh":
        for a in range(k):
            for b in range(a + 1, k):
                links.append((a, b))
    elif cfg.as_graph == "hierarchy":
        core = max(1, min(k, max(3, k // 20)))
        for a in range(core):
            for b in range(a + 1, core):
                links.append((a, b))
        degree = np.ones(k)
        for a in range(core, k):
            prob = degree[:a] / degree[:a].sum()
            ups = rng.choice(a, size=min(a, 2), replace=False, p=prob)
            for b in ups:
                links.append((int(b), a))
                degree[b] += 1
                degree[a] += 1
    else:
        raise TopologyError(f"unknown as_graph {cfg.as_graph!r}")
    if not links:
        return np.zeros((0, 3))
    lat = rng.uniform(lo, hi, size=len(links))
    return np.column_stack([np.array(links, dtype=float), lat])


def _largest_remainder(weights: np.ndarray, total: int) -> np.ndarray:
    if total == 0 or weights.sum() == 0:
        return np.zeros(len(weights), dtype=np.int64)
    raw = weights / weights.sum() * total
    out = np.floor(raw).astype(np.int64)
    rest = total - out.sum()
    order = np.argsort(-(raw - out), kind="stable")
    out[order[:rest]] += 1
    return out


def _prefix_as(cfg: TopologyConfig) -> np.ndarray:
    if cfg.prefix_as is not None:
        pa = np.asarray(cfg.prefix_as, dtype=np.int64)
        if pa.min() < 0 or pa.max() >= cfg.n_as:
            raise TopologyError("prefix_as refers to an AS index outside n_as")
        return pa
    per = cfg.prefixes_per_as
    per = [int(per)] * cfg.n_as if np.isscalar(per) else [int(x) for x in per]
    if len(per) != cfg.n_as or min(per) < 0:
        raise TopologyError("prefixes_per_as must be a count or a list with one entry per AS")
    return np.repeat(np.arange(cfg.n_as), per)


def _prefix_id(idx: int, length: int) -> str:
    return str(ipaddress.IPv4Network(((idx + 256) << 16, length)))


def build_topology(cfg: TopologyConfig) -> Topology:
    rng = rng_for(cfg.seed, "topology")
    links = _as_graph(cfg, rng)
    ases = [AutonomousSystem(asn=64512 + i, name=f"AS{64512 + i}") for i in range(cfg.n_as)]
    for a, b, lat in links:
        ases[int(a)].neighbors[ases[int(b)].asn] = float(lat)
        ases[int(b)].neighbors[ases[int(a)].asn] = float(lat)

    pa = _prefix_as(cfg)
    n_pref = len(pa)
    if n_pref == 0:
        raise TopologyError("topology has no prefixes")
    shares = np.asarray(cfg.rpki_shares, float)
    statuses = list(RPKIStatus)
    rpki = rng.choice(3, size=n_pref, p=shares / shares.sum())
    if cfg.prefix_rpki is not None:
        if len(cfg.prefix_rpki) != n_pref:
            raise TopologyError("prefix_rpki needs one status per prefix")
        rpki = [statuses.index(RPKIStatus(r)) for r in cfg.prefix_rpki]
    lmin, lmax = cfg.prefix_lengths
    lengths = rng.integers(lmin, lmax + 1, size=n_pref)
    country = [cfg.countries[i] for i in rng.integers(len(cfg.countries), size=cfg.n_as)]
    if cfg.as_country is not None:
        if len(cfg.as_country) != cfg.n_as:
            raise TopologyError("as_country needs one code per AS")
        country = list(cfg.as_country)
    prefixes = [Prefix(_prefix_id(i, int(lengths[i])), ases[pa[i]].asn, int(lengths[i]),
                       statuses[rpki[i]], country[pa[i]])
                for i in range(n_pref)]

    # nodes per prefix
    if cfg.nodes_per_prefix is not None:
        npp = np.asarray(cfg.nodes_per_prefix, dtype=np.int64)
        if len(npp) != n_pref or npp.min() < 1:
            raise TopologyError("nodes_per_prefix needs one positive entry per prefix")
    else:
        n_nodes = cfg.n_nodes if cfg.n_nodes is not None else n_pref
        if n_nodes < n_pref:
            raise TopologyError(f"{n_nodes} nodes cannot cover {n_pref} prefixes")
        npp = np.ones(n_pref, dtype=np.int64)
        extra = rng.integers(n_pref, size=n_nodes - n_pref)
        npp += np.bincount(extra, minlength=n_pref)
    node_prefix = np.repeat(np.arange(n_pref), npp)
    n_nodes = len(node_prefix)

    node_counts = _place(cfg, node_prefix, npp, rng)
    cap = cfg.max_validators_per_node
    if cap is not None and node_counts.max(initial=0) > cap:
        raise TopologyError(
            f"placement needs {node_counts.max()} validators on one node, capacity is {cap}")

    validator_node, validator_cluster = _assign_ids(cfg, node_counts, pa[node_prefix], rng)

    hosted = [[] for _ in range(n_nodes)]
    for vid, n in enumerate(validator_node.tolist()):
        hosted[n].append(vid)
    nodes = []
    for i in range(n_nodes):
        k = node_counts[i]
        if rng.random() < min(1.0, k / cfg.subscribe_all_threshold):
            topics = frozenset(range(N_TOPICS))
        else:
            topics = frozenset(int(t) for t in rng.choice(N_TOPICS, size=2, replace=False))
        nodes.append(NetNode(i, prefixes[node_prefix[i]].prefix_id, hosted[i], topics,
                             cfg.mesh_degree, cfg.jitter_mean_ms))
    return Topology(cfg, ases, prefixes, nodes, validator_node, validator_cluster, links)


def _place(cfg: TopologyConfig, node_prefix: np.ndarray, npp: np.ndarray, rng) -> np.ndarray:
    """Validator count per node."""
    n_pref = len(npp)
    n_nodes = len(node_prefix)
    total = int(cfg.validators)
    if total < 0:
        raise TopologyError("validator count must be non-negative")
    if cfg.max_validators_per_node is not None:
        capacity = int(round(n_nodes * (1 - cfg.relay_fraction))) * cfg.max_validators_per_node
        if total > capacity:
            raise TopologyError(f"{total} validators exceed node capacity {capacity}")
    if cfg.placement in ("uniform", "table"):
        if cfg.placement == "uniform":
            per_prefix = np.full(n_pref, total // n_pref, dtype=np.int64)
            per_prefix[: total - per_prefix.sum()] += 1
        else:
            if cfg.prefix_table is None or len(cfg.prefix_table) != n_pref:
                raise TopologyError("prefix_table needs one count per prefix")
            per_prefix = np.asarray(cfg.prefix_table, dtype=np.int64)
            if per_prefix.min() < 0:
                raise TopologyError("prefix_table counts must be non-negative")
            if per_prefix.sum() != total:
                raise TopologyError(
                    f"prefix_table sums to {per_prefix.sum()}, expected {total} validators")
        counts = np.zeros(n_nodes, dtype=np.int64)
        start = np.r_[0, np.cumsum(npp)[:-1]]
        for p in range(n_pref):
            k = npp[p]
            share = np.full(k, per_prefix[p] // k, dtype=np.int64)
            share[: per_prefix[p] - share.sum()] += 1
            counts[start[p]: start[p] + k] = share
        return counts
    if cfg.placement == "heavy_tail":
        w = rng.pareto(cfg.tail_alpha, size=n_nodes) + 1.0
        relay = rng.random(n_nodes) < cfg.relay_fraction
        w[relay] = 0.0
        if w.sum() == 0:
            w[0] = 1.0
        counts = _largest_remainder(w, total)
        cap = cfg.max_validators_per_node
        if cap is not None:
            # spill overflow onto the remaining hosting nodes, largest weight first
            for _ in range(n_nodes):
                over = np.clip(counts - cap, 0, None)
                if over.sum() == 0:
                    break
                counts -= over
                room = np.where((counts < cap) & (w > 0), w, 0.0)
                if room.sum() == 0:
                    raise TopologyError("validators exceed node capacity")
                counts += np.minimum(_largest_remainder(room, int(over.sum())), cap - counts)
            left = total - counts.sum()
            if left:
                free = np.flatnonzero((counts < cap) & (w > 0))
                for n in free:
                    add = min(left, cap - counts[n])
                    counts[n] += add
                    left -= add
                    if not left:
                        break
                if left:
                    raise TopologyError("validators exceed node capacity")
        return counts
    raise TopologyError(f"unknown placement {cfg.placement!r}")


def _assign_ids(cfg: TopologyConfig, node_counts: np.ndarray, node_as: np.ndarray, rng):
    """Operators deposit batches of consecutive validator IDs onto their nodes.

    Batches from all operators interleave in a seeded global order, so IDs
    are contiguous within a batch but not across an operator's deployment.
    """
    hosting = np.flatnonzero(node_counts > 0)
    # group hosting nodes into operators, mostly within one AS
    order = hosting[np.lexsort((rng.random(len(hosting)), node_as[hosting]))]
    lo, hi = cfg.operator_nodes
    node_operator = np.full(len(node_counts), -1, dtype=np.int64)
    i, op = 0, 0
    while i < len(order):
        k = int(rng.integers(lo, hi + 1))
        node_operator[order[i: i + k]] = op
        i += k
        op += 1
    if op > 1 and cfg.operator_mixing > 0:
        movers = hosting[rng.random(len(hosting)) < cfg.operator_mixing]
        node_operator[movers] = rng.integers(op, size=len(movers))

    blo, bhi = cfg.batch_size
    batches = []
    for n in hosting:
        left = int(node_counts[n])
        while left > 0:
            b = min(left, int(rng.integers(blo, bhi + 1)))
            batches.append((int(n), b))
            left -= b
    perm = rng.permutation(len(batches))
    total = int(node_counts.sum())
    validator_node = np.empty(total, dtype=np.int64)
    pos = 0
    for j in perm:
        n, b = batches[j]
        validator_node[pos: pos + b] = n
        pos += b
    return validator_node, node_operator[validator_node]


# ---------------------------------------------------------------- hijacks

class HijackSchedule:
    """Resolved, immutable set of hijack actions over one topology."""

    def __init__(self, topology: Topology, actions: Iterable[HijackAction] = (), seed: int | None = None):
        self.topology = topology
        self.actions = tuple(a.resolve(topology) for a in actions)
        self.seed = topology.config.seed if seed is None else seed
        n = topology.n_nodes
        self._members = []
        self._cuts = []
        for i, a in enumerate(self.actions):
            m = np.zeros(n, dtype=bool)
            m[list(a.partition_membership)] = True
            if a.mode is HijackMode.PARTITION_DROP:
                cut = m[:, None] ^ m[None, :]
            else:
                cut = m[:, None] | m[None, :]
                np.fill_diagonal(cut, False)
            if a.success_prob < 1.0:
                r = rng_for(self.seed, "hijack-pairs", i).random((n, n))
                r = np.triu(r, 1)
                r = r + r.T
                cut &= r < a.success_prob
            self._members.append(m)
            self._cuts.append(cut)

    def active_actions(self, slot: int) -> list:
        return [i for i, a in enumerate(self.actions) if a.active(slot)]

    def reachable(self, slot: int) -> np.ndarray:
        n = self.topology.n_nodes
        out = np.ones((n, n), dtype=bool)
        for i in self.active_actions(slot):
            out &= ~self._cuts[i]
        return out

    def connectivity(self, a: int, b: int, slot: int) -> bool:
        self.topology._check_node(a), self.topology._check_node(b)
        return not any(self._cuts[i][a, b] for i in self.active_actions(slot))

    def path_latency(self, a: int, b: int, slot: int, draw: int | None = None) -> float:
        if not self.connectivity(a, b, slot):
            raise TopologyError(f"nodes {a} and {b} unreachable at slot {slot}")
        return self.topology.path_latency(a, b, draw)

    def isolated_nodes(self, slot: int) -> np.ndarray:
        """Nodes inside any active hijack at ``slot``."""
        m = np.zeros(self.topology.n_nodes, dtype=bool)
        for i in self.active_actions(slot):
            m |= self._members[i]
        return m

    def components(self, slot: int) -> np.ndarray:
        """Connected-component label per node under the reachability at ``slot``."""
        _, labels = connected_components(csr_matrix(self.reachable(slot)), directed=False)
        return labels


def connectivity(schedule: HijackSchedule, a: int, b: int, t: int) -> bool:
    return schedule.connectivity(a, b, t)


# ---------------------------------------------------------------- mapping overlay

def topology_mapping(topology: Topology) -> pd.DataFrame:
    """Ground-truth mapping table in the ingest schema."""
    pidx = topology.validator_prefix()
    pref = topology.prefixes
    return _mapping_frame(
        np.arange(topology.n_validators),
        [pref[i].prefix_id for i in pidx],
        [pref[i].origin_asn for i in pidx],
        [pref[i].rpki.value for i in pidx],
        [pref[i].country for i in pidx])


def _mapping_frame(vids, prefixes, asns, rpki, countries) -> pd.DataFrame:
    return pd.DataFrame({
        "validator_id": pd.Series(vids, dtype="int64"),
        "prefix": pd.Series(prefixes, dtype="str"),
        "asn": pd.array([None if a is None else int(a) for a in asns], dtype="Int64"),
        "rpki_status": pd.Series(rpki, dtype="str"),
        "country": pd.Series(countries, dtype="str"),
    })


def export_mapping_csv(mapping: pd.DataFrame, path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(MAPPING_COLUMNS)
        asn = mapping["asn"].astype("Int64")
        for vid, pfx, a, r, c in zip(mapping["validator_id"], mapping["prefix"], asn,
                                     mapping["rpki_status"], mapping["country"]):
            w.writerow([int(vid), pfx, "" if pd.isna(a) else int(a), r, c])


def ingest_mapping_csv(path) -> pd.DataFrame:
    """Read a validator mapping CSV; rejects malformed rows and duplicate IDs."""
    valid_rpki = {s.value for s in RPKIStatus} | {""}
    vids, prefixes, asns, rpki, countries = [], [], [], [], []
    seen = {}
    errors = []
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or [h.strip() for h in header] != MAPPING_COLUMNS:
            raise MappingFormatError(f"line 1: expected header {','.join(MAPPING_COLUMNS)}")
        for row in reader:
            line = reader.line_num
            if not row:
                continue
            if len(row) != len(MAPPING_COLUMNS):
                errors.append(f"line {line}: expected {len(MAPPING_COLUMNS)} fields, got {len(row)}")
                continue
            vid_s, pfx, asn_s, r, c = (x.strip() for x in row)
            try:
                vid = int(vid_s)
            except ValueError:
                errors.append(f"line {line}: bad validator_id {vid_s!r}")
                continue
            if vid in seen:
                errors.append(f"line {line}: duplicate validator_id {vid} (first on line {seen[vid]})")
                continue
            try:
                asn = int(asn_s) if asn_s else None
            except ValueError:
                errors.append(f"line {line}: bad asn {asn_s!r}")
                continue
            if r not in valid_rpki:
                errors.append(f"line {line}: unknown rpki_status {r!r}")
                continue
            seen[vid] = line
            vids.append(vid), prefixes.append(pfx), asns.append(asn)
            rpki.append(r), countries.append(c)
    if errors:
        raise MappingFormatError("; ".join(errors))
    return _mapping_frame(vids, prefixes, asns, rpki, countries)


def rpki_exposure(source) -> dict:
    """Share per RPKI category and the unprotected share (permissive + no ROA).

    Topologies are counted per node; mapping tables per row.
    """
    if isinstance(source, Topology):
        labels = [source.prefix(n.prefix_id).rpki.value for n in source.nodes]
    else:
        labels = list(source["rpki_status"])
    total = len(labels)
    if total == 0:
        raise TopologyError("no entries to assess")
    out = {s.value: sum(1 for x in labels if x == s.value) / total for s in RPKIStatus}
    out["unknown"] = sum(1 for x in labels if x not in out) / total
    out["unprotected"] = out[RPKIStatus.PERMISSIVE.value] + out[RPKIStatus.NO_ROA.value]
    return out
