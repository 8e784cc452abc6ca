"""Partition the three largest nodes of the 20-node devnet and watch the leak."""
import numpy as np

from posroute.econ import GWEI_PER_ETH
from posroute.scenarios import run_devnet


def main():
    r = run_devnet(seed=1)
    st = r.simulator.state
    print(f"hijacked share p = {r.p:.3f}")
    print(f"first fully partitioned epoch {r.first_full_epoch}, leak from epoch {r.leak_start} "
          f"({r.leak_delay} epochs in)")
    print(f"missed slots over {r.partition_epochs} partition epochs: {r.missed_fraction:.1%}")
    print(f"worst deviation from closed form: hijacked {r.hijacked_balance_error:.2e}, "
          f"honest {r.honest_balance_error:.2e}")
    print(f"finality resumed {r.finality_resume_delay} epochs after repair, "
          f"finalized checkpoint {st.finalized_checkpoint}")
    bal = r.simulator.balances() / GWEI_PER_ETH
    for e in range(0, len(bal), 4):
        print(f"  epoch {e:3d}  hijacked {bal[e, r.hijacked].mean():.6f}  "
              f"honest {bal[e, ~r.hijacked].mean():.6f} ETH")
    print("leak epochs:", np.array(sorted(st.leak_epochs)))


if __name__ == "__main__":
    main()
