"""Pilot values behind the theory-check thresholds and empirical constants."""

import argparse

import numpy as np

from leaderlab import kernels as K
from leaderlab import theory as TH


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--samples", type=int, default=400_000)
    ap.add_argument("--seed", type=int, default=2026)
    a = ap.parse_args()

    print("interpolation ladder (N, T_delta, max deviation, scaled)")
    for r in TH.lemma4_ladder():
        print(f"  {r.N:4d} {r.T_delta:6g} {r.max_deviation:.4e} {r.scaled:.4f}")

    print("folding, Lamperti(1/2): theta, mass error, theta sigma^2, terms")
    ou = K.lamperti_fbm(0.5)
    for theta in (1.0, 0.5, 0.1, 0.01):
        fs = TH.folded_spectrum(ou, theta)
        print(f"  {theta:5g} {fs.total_mass - 1:+.2e} {fs.theta_sigma_sq:.7f} {fs.terms}")

    print("A_theta / theta ladder (mean form, exp form)")
    for th, am, ae in TH.a_theta_ladder(ou, [0.4, 0.2, 0.1, 0.05, 0.02, 0.01]):
        print(f"  {th:5g} {am / th:10.4f} {ae / th:10.4f}")

    print(f"comparison bound with K = {TH.LEMMA5_K:g}: gap / bound for r(i) = 0.5^i, m = 8")
    r = 0.5 ** np.arange(8)
    for lvl in (1.0, 1.5, 2.0, 2.5, 3.0, 3.5, 4.0):
        res = TH.lemma5_check(r, lvl, 8, a.samples, a.seed)
        print(f"  a={lvl:3.1f} gap {res.lhs_gap:.3e} bound {res.rhs_bound:.3e} "
              f"mc {res.mc_error:.1e} ratio {res.tightness:.4f}")


if __name__ == "__main__":
    main()
