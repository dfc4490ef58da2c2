"""Pilot for the two-formulation comparison: log-probability ratio across grid settings."""

import argparse

from leaderlab import kernels as K
from leaderlab import pursuit as P


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--samples", type=int, default=1_000_000)
    ap.add_argument("--n", type=int, default=8)
    ap.add_argument("--T", type=float, default=256.0)
    ap.add_argument("--seed", type=int, default=2026)
    ap.add_argument("--densities", type=int, nargs="+", default=[16, 32])
    a = ap.parse_args()

    bm = K.fbm(0.5)
    for density in a.densities:
        for cont in (P.BROWNIAN_BRIDGE, P.NO_CORRECTION):
            cfg = P.EnsembleConfig.homogeneous(bm, a.n, a.T, formulation=P.SELF_SIMILAR_1T,
                                               density=density, continuity=cont)
            c = P.compare_formulations(cfg, a.seed, a.samples)
            print(f"density {density:3d} {cont:16s} p[1,T]={c.interval_1T.p_hat:.4e} "
                  f"p[0,T]={c.interval_0T.p_hat:.4e} log ratio {c.log_ratio:.4f} violations {c.violations}")


if __name__ == "__main__":
    main()
