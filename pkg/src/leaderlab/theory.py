"""Numerical checks of the inequalities behind the survival bounds."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.special import ndtr

from leaderlab import kernels as K
from leaderlab.pursuit import Z95, Tally, correlation_inequality_check
from leaderlab.sampling import (GridSpec, chunk_sizes, cholesky_sample, make_sampler, stream_rng)
from leaderlab.special import integrate_finite, integrate_semi_infinite, mills_ratio

FOLD_TAIL_RTOL = 1e-8
FOLD_MAX_K = 1_000_000
LEMMA5_K = 1.0  # empirical constant, fixed by the pilot ladder in scripts/pilot_theory.py
LEMMA5_Z = 4.0  # MC allowance across the whole test matrix, where some true gaps are exactly zero


class FoldingError(ValueError):
    pass


# ---------------------------------------------------------------------------
# Shannon interpolation


def shannon_kernel(t, N: int):
    """g_N(t) = sum over |n| < N/2 of sinc(t - n)."""
    if N < 3 or N % 2 == 0:
        raise ValueError("N must be odd and >= 3")
    t = np.asarray(t, dtype=float)
    half = (N - 1) // 2
    flat = np.atleast_1d(t).ravel()
    out = np.empty(flat.shape)
    ns = np.arange(-half, half + 1, dtype=float)
    block = max(1, 4_000_000 // ns.size)
    for i in range(0, flat.size, block):
        out[i:i + block] = np.sinc(flat[i:i + block, None] - ns).sum(axis=1)
    out = out.reshape(t.shape)
    return float(out) if out.ndim == 0 else out


@dataclass(frozen=True)
class Lemma4Result:
    N: int
    T_delta: float
    max_deviation: float
    scaled: float  # max_deviation * (N - T_delta)
    exp_term: float  # e^{-pi N / 2}


def lemma4_check(N: int, T_delta: float, per_unit: int = 64, integers_only: bool = False) -> Lemma4Result:
    """Largest |g_N(t) - 1| over |t| <= T_delta / 2 on a fine grid."""
    if not T_delta < N or N - T_delta < 4:
        raise ValueError("need T_delta < N with N - T_delta >= 4")
    half = T_delta / 2
    if integers_only:
        t = np.arange(-math.floor(half), math.floor(half) + 1, dtype=float)
    else:
        t = np.linspace(-half, half, int(math.ceil(T_delta * per_unit)) + 1)
    dev = float(np.max(np.abs(shannon_kernel(t, N) - 1.0)))
    return Lemma4Result(N, T_delta, dev, dev * (N - T_delta), math.exp(-math.pi * N / 2))


def lemma4_ladder(Ns=(101, 201, 401), gap: float = 50.0, per_unit: int = 64) -> list[Lemma4Result]:
    return [lemma4_check(N, N - gap, per_unit) for N in Ns]


# ---------------------------------------------------------------------------
# spectral folding


def spectral_majorant(kernel: K.KernelSpec) -> tuple[float, float]:
    """(A, p) with f_0(lam) <= A |lam|^-p for large |lam|."""
    if kernel.family == K.LAMPERTI_FBM:
        H = kernel.H
        p = 1.0 + 2.0 * H
        lam = np.geomspace(10.0, 1e6, 400)
        sampled = float(np.max(K.spectral_density(kernel, lam) * lam**p))
        limit = math.pi * K.lamperti_normalizer(H)
        return max(sampled, limit) * (1 + 1e-3), p
    if kernel.family == K.TABULATED:
        r = np.asarray(kernel.correlations)
        if r[-1] != 0.0:
            raise FoldingError("a table ending at a nonzero value has a non-integrable spectral tail")
        s = np.diff(r) / kernel.step
        B = abs(s[0]) + abs(s[-1]) + float(np.abs(np.diff(s)).sum())
        return B / math.pi, 2.0
    raise FoldingError("kernel has no spectral density")


def folding_terms(kernel: K.KernelSpec, theta: float, rtol: float = FOLD_TAIL_RTOL,
                  tail_model: bool = True) -> tuple[int, float]:
    """Smallest power-of-two K whose error bound over |k| > K is below rtol * f_0(0).

    Without a tail model the bound is the majorant sum itself. With one, the
    terms beyond K are replaced by the integral of f_0 over their cells, and
    what remains is the midpoint-rule error (h^2 / 24) |f_0'(Y)| per side,
    with h = 2 pi / theta, Y = 2 pi K / theta and |f_0'| <= p A y^-(p+1)
    taken from the majorant's power law.
    """
    A, p = spectral_majorant(kernel)
    if p <= 1:
        raise FoldingError("majorant is not integrable")
    f00 = float(K.spectral_density(kernel, 0.0))
    if tail_model:
        h = 2 * math.pi / theta

        def bound(k):
            Y = 2 * math.pi * k / theta
            if Y < 10.0:  # below the range where the power law was checked
                return math.inf
            return 2 * h * h / 24 * p * A * Y ** (-p - 1) / (2 * math.pi)
    else:
        # sum_{|k|>K} f_0((lam + 2 pi k)/theta) <= A theta^p pi^-p (2K - 1)^(1-p) / (p - 1)
        coef = A * theta**p * math.pi**-p / (p - 1)

        def bound(k):
            return coef * (2 * k - 1) ** (1 - p) / theta
    k = 1
    while bound(k) >= rtol * f00:
        k *= 2
        if k > FOLD_MAX_K:
            raise FoldingError(f"folding tail bound needs more than {FOLD_MAX_K} terms at theta={theta}")
    return k, bound(k)


def _tail_integral(kernel: K.KernelSpec, lo: float, hi: float, nodes: int = 24):
    """Chebyshev fit of G(Y) = integral of f_0 over [Y, inf) for Y in [lo, hi]."""
    x = np.cos(np.pi * (np.arange(nodes) + 0.5) / nodes)
    ys = 0.5 * (lo + hi) + 0.5 * (hi - lo) * x
    g = [integrate_semi_infinite(lambda y: K.spectral_density(kernel, y), tol=1e-15, a=y0,
                                 first_width=y0).value for y0 in ys]
    coef = np.polynomial.chebyshev.chebfit(x, g, nodes - 1)
    return lambda y: np.polynomial.chebyshev.chebval((2 * np.asarray(y) - lo - hi) / (hi - lo), coef)


def fold(kernel: K.KernelSpec, theta: float, lam, terms: int, tail=None) -> np.ndarray:
    """theta^-1 sum_{|k| <= terms} f_0((lam + 2 pi k)/theta), plus an optional remainder model.

    ``tail`` maps Y to the integral of f_0 beyond Y; the terms with |k| > terms
    are then replaced by their midpoint-rule integral G(Y)/(2 pi).
    """
    lam = np.atleast_1d(np.asarray(lam, dtype=float))
    ks = np.arange(-terms, terms + 1, dtype=float)
    out = np.empty(lam.shape)
    block = max(1, 2_000_000 // ks.size)
    for i in range(0, lam.size, block):
        x = (lam[i:i + block, None] + 2 * math.pi * ks) / theta
        out[i:i + block] = K.spectral_density(kernel, x).sum(axis=1) / theta
    if tail is not None:
        edge = 2 * math.pi * (terms + 0.5)
        out += (tail((edge + lam) / theta) + tail((edge - lam) / theta)) / (2 * math.pi)
    return out


def poisson_fold(kernel: K.KernelSpec, theta: float, lam, lags: int | None = None) -> np.ndarray:
    """(2 pi)^-1 sum_j r(j theta) e^{-i j lam}: the same fold from the sampled correlations."""
    lam = np.atleast_1d(np.asarray(lam, dtype=float))
    if lags is None:
        if kernel.family != K.TABULATED:
            raise ValueError("lags required for kernels without compact support")
        lags = int(math.ceil(kernel.step * (len(kernel.correlations) - 1) / theta))
    j = np.arange(1, lags + 1, dtype=float)
    r = K.correlation(kernel, j * theta)
    out = np.empty(lam.shape)
    for i in range(0, lam.size, 256):
        out[i:i + 256] = 1.0 + 2.0 * (np.cos(np.outer(lam[i:i + 256], j)) @ r)
    return out / (2 * math.pi)


def _lambda_grid(theta: float, points: int) -> np.ndarray:
    uniform = np.linspace(0.0, math.pi, points)
    near = np.geomspace(theta * 1e-3, math.pi, points // 2)
    return np.unique(np.concatenate([uniform, near]))


@dataclass
class FoldedSpectrum:
    theta: float
    lam: np.ndarray
    values: np.ndarray
    sigma_theta_sq: float
    A_theta: float
    A_theta_exp: float
    terms: int
    tail_bound: float
    total_mass: float = math.nan

    def __post_init__(self):
        if np.any(self.values < 0):
            raise ValueError("folded spectrum must be nonnegative")

    @property
    def theta_sigma_sq(self) -> float:
        return self.theta * self.sigma_theta_sq


def a_theta(kernel: K.KernelSpec, theta: float, points: int = 4097) -> tuple[float, float]:
    """Both A_theta forms from psi(lam) = ln[2 pi f_0(0) / f_0(lam)] on (0, pi/theta).

    The first is the running supremum of the interval mean of psi plus one;
    the second exponentiates the mean over the full interval before adding one.
    """
    top = math.pi / theta
    lam = np.concatenate([[0.0], np.geomspace(top * 1e-6, top, points)])
    f = np.maximum(K.spectral_density(kernel, lam), 0.0)
    with np.errstate(divide="ignore"):
        psi = np.log(2 * math.pi * f[0] / f)  # zeros of f_0 make A_theta infinite
    cum = np.concatenate([[0.0], np.cumsum(0.5 * (psi[1:] + psi[:-1]) * np.diff(lam))])
    means = cum[1:] / lam[1:]
    mean_full = cum[-1] / top
    return float(np.max(means)) + 1.0, math.exp(mean_full) + 1.0


def folded_spectrum(kernel: K.KernelSpec, theta: float, points: int = 2049,
                    with_mass: bool = True) -> FoldedSpectrum:
    """Spectral density of the sampled sequence X(k theta) on [0, pi] (it is even).

    The fold runs over all k in Z, the form that makes f_theta even and
    preserves total mass. Terms beyond the majorant cutoff are replaced by
    their integral; ``tail_bound`` bounds what that cutoff leaves out.
    """
    if not theta > 0:
        raise ValueError("theta must be positive")
    lam = _lambda_grid(theta, points)
    if kernel.family == K.TABULATED:
        # compact support: the sum over Z equals a finite Poisson sum, no truncation
        terms, tail, model = 0, 0.0, None
        evaluate = lambda x: poisson_fold(kernel, theta, x)
    else:
        terms, tail = folding_terms(kernel, theta)
        edge = 2 * math.pi * (terms + 0.5)
        model = _tail_integral(kernel, (edge - math.pi) / theta, (edge + math.pi) / theta)
        evaluate = lambda x: fold(kernel, theta, x, terms, model)
    vals = evaluate(lam)
    # exact zeros of the fold (e.g. Fejer-type tables) come back as rounding-level negatives
    vals = np.where(vals < 0, np.where(vals > -1e-14 * vals.max(), 0.0, vals), vals)
    sigma_sq = 2 * math.pi * float(vals.max())
    A_mean, A_exp = a_theta(kernel, theta)
    mass = math.nan
    if with_mass:
        edges = np.unique(np.concatenate([[0.0], theta * np.geomspace(1e-2, math.pi / theta, 24), [math.pi]]))
        edges = edges[edges <= math.pi]
        mass = 2.0 * math.fsum(
            integrate_finite(evaluate, a, b, tol=1e-10).value
            for a, b in zip(edges[:-1], edges[1:]))
    return FoldedSpectrum(theta, lam, vals, sigma_sq, A_mean, A_exp, terms, tail, mass)


def a_theta_ladder(kernel: K.KernelSpec, thetas) -> list[tuple[float, float, float]]:
    """(theta, A_mean, A_exp) for a list of steps."""
    return [(th, *a_theta(kernel, th)) for th in thetas]


# ---------------------------------------------------------------------------
# comparison with independent sequences


@dataclass(frozen=True)
class Lemma5Result:
    a: float
    m: int
    delta: float
    p_hat: float
    independent: float
    lhs_gap: float
    rhs_bound: float
    mc_error: float
    K: float

    @property
    def holds(self) -> bool:
        return self.lhs_gap <= self.rhs_bound + self.mc_error

    @property
    def tightness(self) -> float:
        return self.lhs_gap / self.rhs_bound if self.rhs_bound > 0 else 0.0


def lemma5_check(correlations, a: float, m: int, samples: int, seed: int = 0,
                 K_const: float = LEMMA5_K) -> Lemma5Result:
    """MC of P(xi_i <= a, i <= m) against Phi(a)^m for a stationary sequence.

    ``correlations`` lists r(0), r(1), ... with at least m entries. The bound
    uses the full sequence (nu = m) and sums |r(i)| for 1 <= i < m.
    """
    r = np.asarray(correlations, dtype=float)
    if r.size < m or m < 1:
        raise ValueError("need correlations r(0..m-1) and m >= 1")
    if abs(r[0] - 1.0) > 1e-12:
        raise ValueError("correlations must start at r(0) = 1")
    delta = float(np.max(np.abs(r[1:m]))) if m > 1 else 0.0
    if delta >= 1:
        raise ValueError("need max |r(i)| < 1 for i >= 1")
    idx = np.abs(np.subtract.outer(np.arange(m), np.arange(m)))
    cov = r[idx]
    tally = Tally()
    for c, rows in enumerate(chunk_sizes(samples, 65536)):
        x = cholesky_sample(cov, seed, rows, batch_index=c).paths
        tally = tally.add(np.all(x <= a, axis=1))
    p = tally.survivors / tally.samples
    ind = float(ndtr(a)) ** m
    mc_err = LEMMA5_Z * math.sqrt(max(p * (1 - p), 1.0 / samples) / samples)
    rhs = K_const * (1 - delta**2) ** -0.5 * m * float(np.abs(r[1:m]).sum()) * math.exp(-a * a / (1 + delta))
    return Lemma5Result(a, m, delta, p, ind, abs(p - ind), rhs, mc_err, K_const)


def lemma5_matrix(samples: int, seed: int = 0, levels=(1.0, 2.0, 3.0), sizes=(4, 8)) -> dict:
    """The three-kernel test matrix: white noise, AR-like 0.5^i, Lamperti(1/2) at unit step."""
    lags = np.arange(max(sizes))
    kernels = {
        "white": np.where(lags == 0, 1.0, 0.0),
        "ar_half": 0.5 ** lags,
        "lamperti_0.5": K.lamperti_corr(lags.astype(float), 0.5),
    }
    out = {}
    j = 0
    for name, r in kernels.items():
        for a in levels:
            for m in sizes:
                out[(name, a, m)] = lemma5_check(r, a, m, samples, seed + j)
                j += 1
    return out


# ---------------------------------------------------------------------------
# tail and concentration bounds


@dataclass(frozen=True)
class MillsResult:
    u: np.ndarray
    ratio: np.ndarray
    low: float
    high: float
    monotone: bool


def mills_check(u) -> MillsResult:
    """Psi(u) u e^{u^2/2} over a grid in (1, 40]; tends to 1/sqrt(2 pi)."""
    u = np.asarray(u, dtype=float)
    if np.any(u <= 0) or np.any(u > 40):
        raise ValueError("u grid must lie in (0, 40]")
    ratio = np.asarray(mills_ratio(u), dtype=float)
    order = np.argsort(u)
    mono = bool(np.all(np.diff(ratio[order]) >= -1e-15))
    return MillsResult(u, ratio, float(ratio.min()), float(ratio.max()), mono)


@dataclass(frozen=True)
class ConcentrationResult:
    median: float
    taus: np.ndarray
    empirical: np.ndarray
    bound: np.ndarray
    mc_error: np.ndarray

    @property
    def holds(self) -> bool:
        return bool(np.all(self.empirical + self.mc_error >= self.bound))


def concentration_check(kernel: K.KernelSpec, rho: float, taus, seed: int, samples: int,
                        density: int = 64) -> ConcentrationResult:
    """P(M <= median(M) + tau) >= Phi(tau) for the running max M over [0, rho]."""
    grid = GridSpec(0.0, rho, int(round(rho * density)) + 1)
    sampler = make_sampler(kernel, grid)
    maxima = np.concatenate([sampler.draw(stream_rng(seed, c, 0), rows).max(axis=1)
                             for c, rows in enumerate(chunk_sizes(samples, 8192))])
    med = float(np.median(maxima))
    taus = np.asarray(taus, dtype=float)
    emp = np.array([np.mean(maxima <= med + t) for t in taus])
    err = Z95 * np.sqrt(np.maximum(emp * (1 - emp), 1.0 / samples) / samples)
    return ConcentrationResult(med, taus, emp, ndtr(taus), err)


@dataclass(frozen=True)
class ScalingResult:
    T: np.ndarray
    neg_log_p: np.ndarray
    slope: float
    intercept: float


def small_ball_scaling(kernel: K.KernelSpec, T_values, seed: int, samples: int,
                       level: float = 1.0, density: int = 32) -> ScalingResult:
    """-ln P(|X| <= level on [0, T]) against T; a linear trend is the expected scaling."""
    T_values = np.asarray(sorted(T_values), dtype=float)
    grid = GridSpec(0.0, float(T_values[-1]), int(round(T_values[-1] * density)) + 1)
    sampler = make_sampler(kernel, grid)
    idx = [grid.index_of(T) for T in T_values]
    inside = np.zeros(len(T_values), dtype=np.int64)
    for c, rows in enumerate(chunk_sizes(samples, max(64, (1 << 21) // grid.points))):
        ok = np.abs(sampler.draw(stream_rng(seed, c, 0), rows)) <= level
        first_out = np.where(ok.all(axis=1), grid.points, np.argmin(ok, axis=1))
        inside += np.array([(first_out > i).sum() for i in idx])
    p = np.maximum(inside, 1) / samples
    y = -np.log(p)
    slope, intercept = np.polyfit(T_values, y, 1)
    return ScalingResult(T_values, y, float(slope), float(intercept))


# ---------------------------------------------------------------------------
# report


@dataclass
class CheckResult:
    name: str
    passed: bool
    measured: dict = field(default_factory=dict)
    note: str = ""


def theory_report(seed: int = 2024, samples: int = 100_000) -> list[CheckResult]:
    """Run every check with its acceptance threshold."""
    out: list[CheckResult] = []

    ladder = lemma4_ladder()
    scaled = [r.scaled for r in ladder]
    out.append(CheckResult(
        "lemma4_scaling", max(scaled) / min(scaled) < 2.0 and all(r.exp_term < r.max_deviation for r in ladder),
        {f"N={r.N}": r.scaled for r in ladder}, "(max |g_N - 1|)(N - T_delta) within 2x across the ladder"))
    ints = lemma4_check(101, 51, integers_only=True)
    out.append(CheckResult("lemma4_nodes", ints.max_deviation < 1e-12, {"max_deviation": ints.max_deviation}))

    lam_k = K.lamperti_fbm(0.5)
    fs = folded_spectrum(lam_k, 0.01)
    out.append(CheckResult("folding_mass", abs(fs.total_mass - 1.0) <= 1e-6,
                           {"total_mass": fs.total_mass, "terms": fs.terms, "tail_bound": fs.tail_bound}))
    out.append(CheckResult("theta_sigma_sq", abs(fs.theta_sigma_sq - 4.0) <= 0.05,
                           {"theta": 0.01, "theta_sigma_sq": fs.theta_sigma_sq}))
    white = folded_spectrum(K.tabulated([1.0, 0.0], 1.0), 1.0, with_mass=False)
    flat = float(np.ptp(white.values))
    out.append(CheckResult("folding_white_flat", flat < 1e-9 and abs(white.theta_sigma_sq - 1.0) < 1e-9,
                           {"spread": flat, "theta_sigma_sq": white.theta_sigma_sq}))
    lad = a_theta_ladder(lam_k, [0.4, 0.2, 0.1, 0.05, 0.02, 0.01])
    mono_mean = all(b[1] / b[0] > a[1] / a[0] for a, b in zip(lad, lad[1:]))
    mono_exp = all(b[2] / b[0] > a[2] / a[0] for a, b in zip(lad, lad[1:]))
    out.append(CheckResult("a_theta_monotone", mono_mean and mono_exp,
                           {f"theta={t}": [am, ae] for t, am, ae in lad},
                           "A_theta / theta increasing in 1/theta for the mean and exp forms"))

    mat = lemma5_matrix(samples, seed)
    worst = max(mat.values(), key=lambda r: r.lhs_gap - r.rhs_bound - r.mc_error)
    out.append(CheckResult("lemma5_bound", all(r.holds for r in mat.values()),
                           {f"{k[0]}|a={k[1]:g}|m={k[2]}": [r.lhs_gap, r.rhs_bound, r.mc_error]
                            for k, r in mat.items()},
                           f"K={LEMMA5_K:g}; worst margin at a={worst.a:g}, m={worst.m}"))

    mr = mills_check(np.linspace(1.0, 40.0, 391))
    at40 = float(mr.ratio[-1])
    out.append(CheckResult("mills_ratio", abs(at40 - 0.39894) <= 1e-3 and mr.monotone and mr.low > 0,
                           {"at_40": at40, "min": mr.low, "max": mr.high}))

    conc = concentration_check(lam_k, 2.0, [0.25, 0.5, 1.0, 2.0], seed + 101, samples // 4)
    out.append(CheckResult("concentration", conc.holds,
                           {"median": conc.median, "empirical": conc.empirical.tolist(),
                            "bound": conc.bound.tolist()}))

    gci = correlation_inequality_check(lam_k, 4.0, 1.5, 4, seed + 202, samples // 4)
    out.append(CheckResult("correlation_inequality", gci["holds"],
                           {"whole": gci["whole"].p_hat, "product": gci["product"]}))

    sb = small_ball_scaling(lam_k, [1.0, 2.0, 3.0, 4.0], seed + 303, samples // 4)
    out.append(CheckResult("small_ball_scaling", sb.slope > 0,
                           {"slope": sb.slope, "intercept": sb.intercept, "neg_log_p": sb.neg_log_p.tolist()},
                           "empirical only: -ln P(|X| <= 1 on [0,T]) grows linearly in T"))
    return out
