"""Time the numba and numpy kernel backends on the main workloads.

    python benchmarks/bench_kernels.py [--episodes 2000] [--repeat 3]

The first numba call per kernel is excluded (compilation / cache load).
"""

import argparse
import time

import numpy as np

from activeht import kernels
from activeht.dqn import TrainConfig, train
from activeht.game import optimal_rate
from activeht.model import Belief
from activeht.modelfile import preset
from activeht.sim import simulate


def best_of(fn, repeat):
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t0)
    return min(times)


def workloads(episodes):
    s1, s2 = preset("setup1"), preset("setup2")
    uniform = Belief.uniform(3)
    small_train = TrainConfig(episodes=20, seed=0)
    return {
        f"simulate ejs setup2 ({episodes}x200)": lambda: simulate("ejs", s2, uniform, 0, 200, episodes, seed=1),
        f"simulate heu setup2 ({episodes}x200)": lambda: simulate("heu", s2, uniform, 0, 200, episodes, seed=1),
        f"simulate ope setup1 ({episodes}x200)": lambda: simulate("ope", s1, uniform, 0, 200, episodes, seed=1),
        "solve game setup2 (all h)": lambda: [optimal_rate(s2, h) for h in range(3)],
        "dqn train setup1 (20 episodes)": lambda: train(s1, uniform, small_train),
    }


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--episodes", type=int, default=2000)
    ap.add_argument("--repeat", type=int, default=3)
    args = ap.parse_args()
    results = {}
    for name in kernels.available():
        kernels.use_backend(name)
        for label, fn in workloads(args.episodes).items():
            fn()  # warm-up
            results.setdefault(label, {})[name] = best_of(fn, args.repeat)
    backends = kernels.available()
    print(f"{'workload':<38}" + "".join(f"{b:>12}" for b in backends) + f"{'speedup':>10}")
    for label, row in results.items():
        line = f"{label:<38}" + "".join(f"{row[b]:>11.3f}s" for b in backends)
        if "numba" in row and "numpy" in row:
            line += f"{row['numpy'] / row['numba']:>9.1f}x"
        print(line)


if __name__ == "__main__":
    main()
