"""Independent check of the three-walker leader exponent (n = 2, Brownian particles).

Simulates the two gaps X_i - X_0 directly as a correlated Gaussian random walk
(covariance [[2, 1], [1, 2]] per unit time) on a fine step, without the
package's samplers, and fits the decay of P(both gaps stay below 1 up to T).
The continuum value is pi / (2 * arccos(-1/2)) = 3/4: the gap vector is a
planar Brownian motion that must stay in a wedge of opening 2 pi / 3.
"""

import argparse
import json
import math

import numpy as np


def wedge_exponent(rho: float = 0.5) -> float:
    return math.pi / (2.0 * math.acos(-rho))


def survival_curve(samples: int, dt: float, T_max: float, seed: int, block: int = 256):
    rng = np.random.default_rng(seed)
    chol = np.linalg.cholesky(np.array([[2.0, 1.0], [1.0, 2.0]]) * dt)
    steps = int(round(T_max / dt))
    pos = np.zeros((samples, 2))
    alive = np.ones(samples, dtype=bool)
    death = np.full(samples, steps + 1)
    done = 0
    while done < steps and alive.any():
        k = min(block, steps - done)
        idx = np.flatnonzero(alive)
        inc = rng.standard_normal((idx.size, k, 2)) @ chol.T
        path = pos[idx, None, :] + np.cumsum(inc, axis=1)
        hit = (path >= 1.0).any(axis=2)
        first = np.where(hit.any(axis=1), np.argmax(hit, axis=1), k)
        dead = first < k
        death[idx[dead]] = done + first[dead] + 1
        alive[idx[dead]] = False
        pos[idx] = path[:, -1, :]
        done += k
    return death, steps


def fit(death, dt: float, horizons) -> dict:
    N = death.size
    T = np.asarray(horizons, dtype=float)
    p = np.array([(death > int(round(t / dt))).mean() for t in T])
    w = N * p / (1 - p)
    x, y = np.log(T), np.log(p)
    xm, ym = np.average(x, weights=w), np.average(y, weights=w)
    slope = np.sum(w * (x - xm) * (y - ym)) / np.sum(w * (x - xm) ** 2)
    se = math.sqrt(1.0 / np.sum(w * (x - xm) ** 2))
    return {"horizons": T.tolist(), "p": p.tolist(), "gamma": float(-slope), "gamma_se": se}


def run(samples: int = 100_000, dt: float = 1 / 64, T_max: float = 256.0, seed: int = 1,
        horizons=(16, 32, 64, 128, 256)) -> dict:
    death, _ = survival_curve(samples, dt, T_max, seed)
    out = fit(death, dt, horizons)
    out.update({"samples": samples, "dt": dt, "wedge_exponent": wedge_exponent()})
    return out


if __name__ == "__main__":
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--samples", type=int, default=100_000)
    ap.add_argument("--dt", type=float, default=1 / 64)
    ap.add_argument("--T", type=float, default=256.0)
    ap.add_argument("--seed", type=int, default=1)
    a = ap.parse_args()
    print(json.dumps(run(a.samples, a.dt, a.T, a.seed), indent=2))
