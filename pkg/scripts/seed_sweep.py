"""Spread of the detection results over training corpus seeds."""
import argparse

import numpy as np

from hstgcnn.experiments import detection_experiment
from hstgcnn.synth import CorpusConfig


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--seeds", type=int, nargs="+", default=list(range(5)))
    args = ap.parse_args()
    rows = []
    for seed in args.seeds:
        res = detection_experiment(CorpusConfig(seed=seed), mixed_seeds=(1000 + seed,), burst_seeds=(2000 + seed,))
        ab = res.mixed["ablation"]
        best_single = max(ab["L1"], ab["L2"], ab["L3"])
        rows.append((res.mixed["auc"], res.burst_auc, res.mixed["auc"] - best_single))
        w = "  ".join(f"{res.archetypes[g]} {res.weights[g]}" for g in sorted(res.weights))
        print(f"seed {seed}: mixed {rows[-1][0]:.3f} burst {rows[-1][1]:.3f} "
              f"full minus best single {rows[-1][2]:+.3f}  {w}", flush=True)
    arr = np.array(rows)
    print(f"mean: mixed {arr[:, 0].mean():.3f} burst {arr[:, 1].mean():.3f} margin {arr[:, 2].mean():+.3f}")


if __name__ == "__main__":
    main()
