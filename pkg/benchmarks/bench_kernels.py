"""Compiled vs numpy kernels on representative inputs.

    python3 benchmarks/bench_kernels.py [--repeat N]
"""
import argparse
import timeit

import numpy as np

import robustcps.synthesis as syn
from robustcps import _kernels_py
from robustcps.scenarios import robot
from robustcps.synthesis import SynthesisTarget, _build_game

try:
    from robustcps import _kernels as compiled
except ImportError:
    compiled = None


def cases():
    rng = np.random.default_rng(0)
    centers = rng.uniform(-2.4, 2.4, (20000, 2))
    ball = (np.array([-12, -12]), np.array([0.2, 0.2]), np.array([25, 25]), 0.45, True, 1e-9)
    g = rng.uniform(0, 3, 2000)
    sc = robot(4.0)
    game = _build_game(sc.cs_hat, SynthesisTarget(1.4, 0.2), 1_000_000)

    def solve(impl):
        saved, syn.kernels.safety_rounds = syn.kernels.safety_rounds, impl.safety_rounds
        try:
            syn._solve(sc.cs_hat, game)
        finally:
            syn.kernels.safety_rounds = saved

    return {
        "ball_successors (20k centers)": lambda m: m.ball_successors(centers, *ball),
        "rhs_bruteforce (T=2000)": lambda m: m.rhs_bruteforce(g, 0, 0.9),
        "safety_rounds (robot scale 4)": solve,
    }


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--repeat", type=int, default=3)
    args = ap.parse_args()
    impls = [("python", _kernels_py)] + ([("compiled", compiled)] if compiled else [])
    print(f"{'kernel':34s}" + "".join(f"{n:>12s}" for n, _ in impls) + ("   speedup" if compiled else ""))
    for name, fn in cases().items():
        times = [min(timeit.repeat(lambda: fn(m), number=1, repeat=args.repeat)) for _, m in impls]
        row = f"{name:34s}" + "".join(f"{t * 1e3:10.1f}ms" for t in times)
        if compiled:
            row += f"{times[0] / times[1]:9.1f}x"
        print(row)


if __name__ == "__main__":
    main()
