"""Ready-made networks and runs: the 1,008-validator devnet partition and the
seven-node walkthrough used for the attack illustrations."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .consensus import ChainSimulator, canonical_throughput
from .econ import EconContext, absent_balance_trajectory, expected_validator_reward
from .topology import HijackAction, HijackMode, HijackSchedule, Topology, TopologyConfig, build_topology

# validators per devnet node; three nodes together hold ~37%
DEVNET_TABLE = [125, 124, 124] + [38] * 6 + [37] * 11
DEVNET_HIJACK_SLOTS = (208, 1019)
WALKTHROUGH_NODES = "ABCDEFG"


def devnet_topology(seed: int = 1) -> Topology:
    cfg = TopologyConfig(n_as=len(DEVNET_TABLE), validators=sum(DEVNET_TABLE), placement="table",
                         prefix_table=DEVNET_TABLE, seed=seed)
    return build_topology(cfg)


def walkthrough_topology(seed: int = 3, validators_per_node: int = 2) -> Topology:
    """Seven nodes A..G, one per AS, plus an eighth AS with no nodes for the adversary."""
    cfg = TopologyConfig(n_as=8, prefixes_per_as=[1] * 7 + [0], validators=7 * validators_per_node,
                         placement="uniform", seed=seed)
    return build_topology(cfg)


def node_of(label: str) -> int:
    return WALKTHROUGH_NODES.index(label)


@dataclass
class DevnetResult:
    simulator: ChainSimulator
    hijacked: np.ndarray            # validator mask
    p: float
    first_full_epoch: int           # first epoch entirely inside the partition
    leak_start: int | None
    missed_fraction: float          # over the full partition epochs
    partition_epochs: int
    hijacked_balance_error: float   # worst relative error vs closed form, per epoch
    honest_balance_error: float
    finality_resume_delay: int | None   # epochs after the repair epoch

    @property
    def leak_delay(self):
        return None if self.leak_start is None else self.leak_start - self.first_full_epoch


def run_devnet(seed: int = 1, start_slot: int = DEVNET_HIJACK_SLOTS[0], end_slot: int = DEVNET_HIJACK_SLOTS[1],
               tail_epochs: int = 12, hijacked_nodes=(0, 1, 2)) -> DevnetResult:
    """Partition the three largest devnet nodes over [start_slot, end_slot] and compare with closed form."""
    topo = devnet_topology(seed)
    pfx = {topo.nodes[i].prefix_id for i in hijacked_nodes}
    sched = HijackSchedule(topo, [HijackAction(pfx, start_slot, end_slot, HijackMode.PARTITION_DROP)])
    sim = ChainSimulator(topo, sched, seed=seed)
    spe = sim.params.slots_per_epoch
    last_epoch = end_slot // spe
    sim.run(last_epoch + 1 + tail_epochs)
    st = sim.state
    hij = np.isin(topo.validator_node, list(hijacked_nodes))
    p = float(hij.mean())

    first_full = -(-start_slot // spe)
    last_full = (end_slot + 1) // spe - 1
    leak = sorted(e for e in st.leak_epochs if e >= first_full)
    leak_start = leak[0] if leak else None
    missed = 1 - canonical_throughput(st, (first_full * spe, (last_full + 1) * spe))

    # closed form over the fully partitioned epochs
    bal = sim.balances()
    leak_set = set(st.leak_epochs)
    flags = [e in leak_set for e in range(first_full, last_full + 1)]
    start_bal = bal[first_full - 1, hij] if first_full > 0 else np.full(hij.sum(), 32 * 10**9)
    ctx = EconContext(len(hij))
    scores0 = np.array([s[3] for s in sim.snapshots])[first_full - 1, hij] if first_full > 0 else 0
    worst_h = 0.0
    for b0, s0, idx in zip(start_bal, np.broadcast_to(scores0, start_bal.shape), np.flatnonzero(hij)):
        traj = np.array(absent_balance_trajectory(flags, ctx, int(b0), int(s0)))
        sim_traj = bal[first_full: last_full + 1, idx]
        worst_h = max(worst_h, float(np.max(np.abs(sim_traj - traj) / traj)))
    # honest side: mean balance against the expected reward rate
    honest_mean = bal[first_full - 1: last_full + 1, ~hij].mean(1)
    exp = [honest_mean[0]]
    for leak_flag in flags:
        exp.append(exp[-1] + expected_validator_reward(p, leak_flag, ctx))
    worst_o = float(np.max(np.abs(honest_mean[1:] - np.array(exp[1:])) / np.array(exp[1:])))

    hist = st.finalized_history
    resume = None
    for e in range(last_epoch + 1, len(hist)):
        if hist[e] > hist[last_epoch]:
            resume = e - last_epoch
            break
    return DevnetResult(sim, hij, p, first_full, leak_start, missed, last_full - first_full + 1,
                        worst_h, worst_o, resume)
