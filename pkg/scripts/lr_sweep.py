"""How often training diverges for each peak learning rate (momentum 0.9)."""
import argparse

from hstgcnn.errors import NumericError
from hstgcnn.pipeline import collect_windows
from hstgcnn.skeleton import LEVELS
from hstgcnn.synth import CorpusConfig, SceneSpec, generate_corpus
from hstgcnn.net import ModelConfig
from hstgcnn.train import TrainConfig, train_level


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--lrs", type=float, nargs="+", default=[0.05, 0.1, 0.2, 0.5])
    ap.add_argument("--seeds", type=int, default=4)
    args = ap.parse_args()
    for archetype in ("dense-small", "sparse-large"):
        cfg = CorpusConfig(scenes=(SceneSpec("s", archetype, 8, 0),))
        train, _ = generate_corpus(cfg)
        for level in LEVELS:
            windows = collect_windows(train, level)
            for lr in args.lrs:
                diverged, ratios = 0, []
                for seed in range(args.seeds):
                    try:
                        _, hist = train_level(windows, TrainConfig(lr_max=lr, seed=seed), ModelConfig(level))
                        ratios.append(hist[-1] / hist[0])
                    except NumericError:
                        diverged += 1
                worst = f"{max(ratios):.3f}" if ratios else "-"
                print(f"{archetype:12s} {level:4s} lr {lr:<5} diverged {diverged}/{args.seeds} "
                      f"worst loss ratio {worst}", flush=True)


if __name__ == "__main__":
    main()
