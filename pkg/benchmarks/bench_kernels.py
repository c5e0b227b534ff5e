"""Compiled vs pure-Python kernels: FFBS draws and full Gibbs sweeps.

    python3 benchmarks/bench_kernels.py [--repeats 5] [--seed 0]

Prints median seconds per call for each backend and the speedup of each
backend over the pure-Python fallback.
"""
import argparse

from mjpgibbs import bench, kernels


def main():
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--repeats", type=int, default=bench.MIN_REPEATS)
    p.add_argument("--seed", type=int, default=0)
    args = p.parse_args()
    print(f"backends: {', '.join(kernels.available())}")
    rows = bench.add_speedups(bench.kernel_benchmark(repeats=args.repeats, seed=args.seed)
                              + bench.sweep_benchmark(repeats=args.repeats, seed=args.seed))
    print(f"{'case':<12}{'N':>5}{'T':>7}  {'backend':<8}{'seconds':>12}{'speedup':>9}")
    for r in rows:
        print(f"{r['case']:<12}{r['n_states']:>5}{r['n_steps']:>7}  {r['backend']:<8}"
              f"{r['seconds']:>12.3e}{r['speedup']:>9.1f}")


if __name__ == "__main__":
    main()
