"""Time the compiled and numpy kernels on the same batch of simulation cases.

    python3 benchmarks/bench_kernels.py --r 0.1 --repeat 5
"""

import argparse
import time

import numpy as np

from wiou_lab.losses import Base
from wiou_lab.simlab import SimConfig, available_backends, evaluate_batch, generate_cases, get_backend


def best_of(fn, repeat):
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t0)
    return min(times)


def main():
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--r", type=float, default=0.1)
    p.add_argument("--subsample", type=float, default=1.0)
    p.add_argument("--repeat", type=int, default=5)
    p.add_argument("--workers", type=int, default=1)
    args = p.parse_args()

    cases = generate_cases(SimConfig(radius=args.r, subsample=args.subsample))
    anchors, targets = cases.anchors(), cases.targets()
    backends = [get_backend(name) for name in available_backends()]
    print(f"{len(cases)} cases, workers {args.workers}, backends {', '.join(b.name for b in backends)}")
    print(f"{'loss':<7}" + "".join(f"{b.name + ' ms':>12}" for b in backends) + f"{'speedup':>10}{'max |diff|':>13}")
    for base in Base:
        timings, outs = [], []
        for b in backends:
            run = lambda: evaluate_batch(base, anchors, targets, 1e-7, workers=args.workers, backend=b)
            outs.append(run())
            timings.append(best_of(run, args.repeat))
        line = f"{base.value:<7}" + "".join(f"{t * 1e3:>12.2f}" for t in timings)
        if len(backends) == 2:
            diff = max(float(np.max(np.abs(x - y))) for x, y in zip(*outs))
            line += f"{timings[1] / timings[0]:>9.1f}x{diff:>13.1e}"
        print(line)


if __name__ == "__main__":
    main()
