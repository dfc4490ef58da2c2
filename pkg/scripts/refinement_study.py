"""Grid-refinement report for a survival or capture_cdf config: p_hat at the config density and its coarsenings."""

import argparse

from leaderlab import config as C
from leaderlab import pursuit as P


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("config")
    ap.add_argument("--samples", type=int, default=None, help="override the config's sample count")
    ap.add_argument("--strides", type=int, nargs="+", default=[1, 2, 4])
    a = ap.parse_args()

    cfg = C.load_config(a.config)
    ens = cfg.ensemble
    if cfg.kind not in (C.SURVIVAL, C.CAPTURE_CDF):
        raise SystemExit("refinement needs a survival or capture_cdf config")
    samples = a.samples or cfg.samples
    rows = P.refinement_study(ens, cfg.seed, samples, a.strides)
    print(f"{'density':>8} {'stride':>6} {'survivors':>10} {'p_hat':>12} {'ci_low':>12} {'ci_high':>12}")
    for r in rows:
        e = r.estimate
        print(f"{r.density:8g} {r.stride:6d} {e.survivors:10d} {e.p_hat:12.5e} {e.ci_low:12.5e} {e.ci_high:12.5e}")


if __name__ == "__main__":
    main()
