"""Plan a partition against the most loaded prefixes and a single-slot block suppression."""
from posroute import adversary, analysis, econ
from posroute.consensus import ChainSimulator
from posroute.scenarios import devnet_topology


def stakebleed():
    mapping = analysis.mainnet_shaped_mapping(0)
    sel = adversary.stakebleed_select_prefixes(mapping, 1 / 3)
    print(f"{len(sel.prefixes)} prefixes hold {sel.achieved_fraction:.2%} of {len(mapping)} validators")
    ctx = econ.EconContext(len(mapping))
    for hours in (1, 2, 3):
        lb = adversary.stakebleed_report(sel.achieved_fraction, hours, ctx)
        eth = lb.in_eth()
        print(f"  {hours} h: total {eth['total']:.1f} ETH (penalties {eth['hijacked_penalties']:.1f}, "
              f"missed {eth['hijacked_missed_rewards']:.1f}, others {eth['nonhijacked_losses']:.1f}), "
              f"leak {lb.leak_triggered}")


def knockblock():
    topo = devnet_topology(1)
    sim = ChainSimulator(topo, seed=1)
    scheds = [sim.schedule_for(e) for e in range(2)]
    own = scheds[1].proposers[10]
    mapping = {v: topo.nodes[topo.validator_node[v]].prefix_id for v in range(topo.n_validators)}
    plan = adversary.knockblock_plan(scheds, own, mapping, after_slot=33)
    out = adversary.execute_knockblock(plan, topo, seed=1, baseline_mev_eth=0.05)
    print(f"suppress slot {plan.target_slot} (validator {plan.target_validator}) ahead of own slot "
          f"{plan.own_slot}, hijacking {sorted(plan.prefixes)} for {plan.active_hijack_seconds()} s")
    print(f"  target missed: {out.target_missed}; block reward {out.baseline_reward_gwei} -> "
          f"{out.attacker_reward_gwei} Gwei; MEV uplift {out.mev_uplift_eth:.4f} ETH")


if __name__ == "__main__":
    stakebleed()
    knockblock()
