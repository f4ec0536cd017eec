"""Model size and single-process scoring throughput."""
import time

from hstgcnn.net import ModelConfig, init_params, param_count, predict
from hstgcnn.pipeline import collect_windows
from hstgcnn.skeleton import HIGH, LOW
from hstgcnn.synth import CorpusConfig, generate_corpus


def main():
    train, _ = generate_corpus(CorpusConfig())
    for level in (LOW, HIGH):
        params = init_params(ModelConfig(level), seed=0)
        windows = collect_windows(train, level)
        predict(params, windows[:64])
        t0 = time.perf_counter()
        predict(params, windows)
        dt = time.perf_counter() - t0
        print(f"{level}: {param_count(params)} parameters, {len(windows)} windows in {dt:.3f} s "
              f"= {len(windows) / dt:.0f} windows/s")


if __name__ == "__main__":
    main()
