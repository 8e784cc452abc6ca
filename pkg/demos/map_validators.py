"""Infer validator-to-prefix mapping from gossip timing on the default synthetic network."""
from posroute.inference import countermeasure_eval, run_default


def main():
    topo, traces, run = run_default()
    print(f"{topo.n_nodes} nodes, {topo.n_validators} validators, {traces.epochs} epochs, "
          f"{len(traces.records)} deliveries seen by the observer")
    print(f"host in top-10 candidates: {run.top10_hit:.1%}")
    print(f"consecutive-ID seeding covers {run.seed_coverage:.1%}, "
          f"shuffled control {run.shuffled_coverage:.1%}")
    print(f"training examples {run.metrics['training_examples']}, "
          f"holdout accuracy {run.metrics['holdout_accuracy']:.3f}")
    print(f"end-to-end accuracy {run.accuracy:.3f}")
    modes = ["none", ("add_latency", 50), ("add_latency", 500), "disable_eager_oos"]
    print(countermeasure_eval(topo, modes, traces.epochs, 7, traces=traces)
          [["mode", "accuracy", "seed_coverage", "delta"]].to_string(index=False))


if __name__ == "__main__":
    main()
