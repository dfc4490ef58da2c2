"""Pilot for the leadership-ratio band: coupled stationary sweep with per-cell survivors.

Prints -ln p / (T ln n) with its CI for every admissible (T, n) cell, and the
survivor counts that decide whether a band around 1/d can be resolved at all.
"""

import argparse

from leaderlab import exponents as X
from leaderlab import kernels as K
from leaderlab import pursuit as P


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--samples", type=int, default=100_000)
    ap.add_argument("--density", type=int, default=64)
    ap.add_argument("--seed", type=int, default=2026)
    ap.add_argument("--H", type=float, default=0.5)
    ap.add_argument("--T", type=float, nargs="+", default=[4.0, 8.0])
    ap.add_argument("--n", type=int, nargs="+", default=[8, 16, 32, 64])
    a = ap.parse_args()

    kernel = K.lamperti_fbm(a.H)
    plan = X.SweepPlan.product(a.T, a.n)
    base = P.EnsembleConfig.homogeneous(kernel, 2, max(a.T), density=a.density)
    table = X.sweep(plan, base, a.seed, a.samples, coupled=True)
    print(f"prediction 1/d = {table.prediction:.6f}; dropped cells {list(plan.dropped)}")
    print(f"{'T':>5} {'n':>4} {'survivors':>10} {'p_hat':>12} {'ratio':>8} {'ci_low':>8} {'ci_high':>8}")
    for r in table.rows:
        e, q = r.estimate, r.ratio
        val = "  >" if q.one_sided else f"{q.value:8.4f}"
        print(f"{r.T:5g} {r.n:4d} {e.survivors:10d} {e.p_hat:12.4e} {val:>8} {q.ci_low:8.4f} {q.ci_high:8.4f}")


if __name__ == "__main__":
    main()
