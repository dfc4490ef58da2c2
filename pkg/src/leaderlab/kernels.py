"""Correlation kernels, spectral densities and leadership constants.

Spectral convention: r(t) = integral over the line of exp(i t lam) f(lam),
so a unit-variance kernel has a density integrating to 1 and the
leadership constant d = integral of r over the line equals 2 pi f(0).
"""

from __future__ import annotations

import math
import threading
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from leaderlab.special import integrate_semi_infinite, log_gamma, log_gamma_ratio_vertical

FBM = "fbm"
LAMPERTI_FBM = "lamperti_fbm"
TABULATED = "tabulated"

CLOSED_FORM = "closed_form"
QUADRATURE = "quadrature"
SPECTRAL = "spectral"


@dataclass(frozen=True)
class KernelSpec:
    """Process family descriptor.

    ``fbm`` is fractional Brownian motion B_H (self-similar, not stationary);
    ``lamperti_fbm`` is its Lamperti transform, a unit-variance stationary
    process; ``tabulated`` is a stationary correlation sampled at lags
    0, step, 2*step, ... with linear interpolation and zero beyond the table.
    """

    family: str
    H: float | None = None
    correlations: tuple[float, ...] | None = None
    step: float | None = None

    def __post_init__(self):
        if self.family in (FBM, LAMPERTI_FBM):
            _check_index(self.H)
        elif self.family == TABULATED:
            r = self.correlations
            if r is None or len(r) < 2 or self.step is None or not self.step > 0:
                raise ValueError("tabulated kernel needs >= 2 correlations and a positive step")
            if abs(r[0] - 1.0) > 1e-12:
                raise ValueError(f"tabulated correlation must have r(0) = 1, got {r[0]}")
            if any(abs(v) > 1.0 + 1e-12 or not math.isfinite(v) for v in r):
                raise ValueError("tabulated correlation values must satisfy |r| <= 1")
        else:
            raise ValueError(f"unknown kernel family {self.family!r}")

    @property
    def stationary(self) -> bool:
        return self.family != FBM

    @property
    def tag(self) -> str:
        if self.family == TABULATED:
            return f"tabulated(step={self.step!r},n={len(self.correlations)})"
        return f"{self.family}(H={self.H!r})"

    @property
    def truncation_jump(self) -> float:
        """|r| at the last tabulated lag: the discontinuity left by zero extrapolation.

        If |r| is nonincreasing beyond the table, the correlation mass dropped by
        truncation is at most this value times the (unknown) remaining support,
        so a value near zero is the condition for trusting the tabulation.
        """
        if self.family != TABULATED:
            return 0.0
        return abs(self.correlations[-1])


def fbm(H: float) -> KernelSpec:
    return KernelSpec(FBM, H=float(H))


def lamperti_fbm(H: float) -> KernelSpec:
    return KernelSpec(LAMPERTI_FBM, H=float(H))


def tabulated(correlations, step: float) -> KernelSpec:
    return KernelSpec(TABULATED, correlations=tuple(float(v) for v in correlations), step=float(step))


def load_tabulated(path) -> KernelSpec:
    """Read a two-column (lag, correlation) text file; a header line is optional.

    Lags must start at 0, increase strictly and be evenly spaced.
    """
    lines = [ln for ln in Path(path).read_text().splitlines() if ln.strip() and not ln.lstrip().startswith("#")]
    rows = []
    for lineno, line in enumerate(lines):
        parts = line.replace(",", " ").split()
        try:
            vals = [float(p) for p in parts]
        except ValueError:
            if lineno == 0:
                continue  # header
            raise ValueError(f"{path}: unparsable line {line!r}") from None
        if len(vals) != 2:
            raise ValueError(f"{path}: expected two columns, got {line!r}")
        rows.append(vals)
    if len(rows) < 2:
        raise ValueError(f"{path}: need at least two rows")
    lags = np.array([r[0] for r in rows])
    corr = [r[1] for r in rows]
    diffs = np.diff(lags)
    if lags[0] != 0.0:
        raise ValueError(f"{path}: first lag must be 0, got {lags[0]}")
    if np.any(diffs <= 0):
        bad = int(np.argmax(diffs <= 0)) + 1
        raise ValueError(f"{path}: lags not strictly increasing at row {bad}")
    step = float(diffs[0])
    if np.max(np.abs(diffs - step)) > 1e-9 * max(1.0, step):
        raise ValueError(f"{path}: lags are not evenly spaced")
    return tabulated(corr, step)


def _check_index(H):
    if H is None or not (0.0 < H < 1.0):
        raise ValueError(f"index H must lie in (0, 1), got {H}")


def fbm_cov(s, t, H: float):
    """Cov(B_H(s), B_H(t)) = (s^2H + t^2H - |t - s|^2H) / 2."""
    _check_index(H)
    s = np.asarray(s, dtype=float)
    t = np.asarray(t, dtype=float)
    if np.any(s < 0) or np.any(t < 0):
        raise ValueError("fbm_cov needs s, t >= 0")
    h2 = 2.0 * H
    out = 0.5 * (s**h2 + t**h2 - np.abs(t - s) ** h2)
    return float(out) if out.ndim == 0 else out


def lamperti_corr(tau, H: float):
    """Correlation of the Lamperti transform of B_H at lag tau.

    r_H(tau) = [e^{tau H} + e^{-tau H} - (e^{tau/2} - e^{-tau/2})^{2H}] / 2,
    evaluated through e^{H tau} expm1(2H log1p(-e^{-tau})) in log space so the
    large-lag cancellation never happens in floating point.
    """
    _check_index(H)
    tau = np.abs(np.asarray(tau, dtype=float))
    out = np.ones(tau.shape)
    pos = tau > 0
    tp = tau[pos]
    u = -np.log1p(-np.exp(-tp))  # > 0, ~e^{-tau} for large tau
    x = -2.0 * H * u
    with np.errstate(divide="ignore"):
        ratio = np.where(x == 0.0, 1.0, np.expm1(x) / np.where(x == 0.0, 1.0, x))
        grow = np.exp(H * tp + np.log(2.0 * H * u))
    out[pos] = 0.5 * (np.exp(-H * tp) + grow * ratio)
    return float(out) if out.ndim == 0 else out


def _tabulated_corr(kernel: KernelSpec, tau):
    r = np.asarray(kernel.correlations)
    tau = np.abs(np.asarray(tau, dtype=float))
    lags = np.arange(len(r)) * kernel.step
    out = np.interp(tau, lags, r, right=0.0)
    out = np.where(tau > lags[-1], 0.0, out)
    return float(out) if out.ndim == 0 else out


def correlation(kernel: KernelSpec, tau):
    """Stationary correlation r(tau) of ``kernel``."""
    if kernel.family == LAMPERTI_FBM:
        return lamperti_corr(tau, kernel.H)
    if kernel.family == TABULATED:
        return _tabulated_corr(kernel, tau)
    raise ValueError("fbm is not stationary; use fbm_cov or lamperti_fbm")


_NORM_CACHE: dict[float, float] = {}
_NORM_LOCK = threading.Lock()


def _lamperti_shape(lam, H: float):
    # cosh(pi lam) |Gamma(-H + i lam)|^2 = pi |Gamma(-H + i lam)|^2 / |Gamma(1/2 + i lam)|^2
    return math.pi * np.exp(2.0 * np.real(log_gamma_ratio_vertical(-H, 0.5, lam)))


def lamperti_normalizer(H: float) -> float:
    """c_H making the Lamperti spectral density integrate to one (cached per H)."""
    _check_index(H)
    c = _NORM_CACHE.get(H)
    if c is None:
        res = integrate_semi_infinite(lambda lam: _lamperti_shape(lam, H), tol=1e-11)
        c = 1.0 / (2.0 * res.value)
        with _NORM_LOCK:
            c = _NORM_CACHE.setdefault(H, c)
    return c


def lamperti_spectral_density(lam, H: float):
    """f_H(lam) = c_H cosh(pi lam) |Gamma(-H + i lam)|^2 with unit total mass."""
    out = lamperti_normalizer(H) * _lamperti_shape(np.abs(np.asarray(lam, dtype=float)), H)
    return float(out) if np.ndim(out) == 0 else out


def _sinc1(x):
    return np.sinc(x / math.pi)


def _tabulated_spectral_density(kernel: KernelSpec, lam):
    # exact cosine transform of the piecewise-linear interpolant (zero past the table)
    r = np.asarray(kernel.correlations)
    dt = kernel.step
    L = dt * (len(r) - 1)
    lam = np.abs(np.asarray(lam, dtype=float))
    flat = np.atleast_1d(lam).ravel()
    slopes = np.diff(r) / dt
    mids = (np.arange(len(r) - 1) + 0.5) * dt
    out = np.empty(flat.shape)
    block = max(1, 2_000_000 // len(mids))
    for i in range(0, flat.size, block):
        lm = flat[i:i + block, None]
        inner = np.sum(slopes * mids * _sinc1(lm * mids), axis=1)
        out[i:i + block] = r[-1] * L * _sinc1(flat[i:i + block] * L) - dt * _sinc1(flat[i:i + block] * dt / 2) * inner
    out /= math.pi
    out = out.reshape(np.shape(lam))
    return float(out) if out.ndim == 0 else out


def spectral_density(kernel: KernelSpec, lam):
    if kernel.family == LAMPERTI_FBM:
        return lamperti_spectral_density(lam, kernel.H)
    if kernel.family == TABULATED:
        return _tabulated_spectral_density(kernel, lam)
    raise ValueError("fbm has no spectral density; use lamperti_fbm")


@dataclass(frozen=True)
class LeadershipConstant:
    d: float
    source: str

    def __post_init__(self):
        if not self.d > 0:
            raise ValueError(f"leadership constant must be positive, got {self.d}")


def d_closed_form(H: float) -> LeadershipConstant:
    """d_H = 2 Gamma(1-H) Gamma(2H) / Gamma(1+H)."""
    _check_index(H)
    lg = np.real(log_gamma(np.array([1.0 - H, 2.0 * H, 1.0 + H])))
    return LeadershipConstant(2.0 * math.exp(lg[0] + lg[1] - lg[2]), CLOSED_FORM)


def d_quadrature(kernel: KernelSpec, tol: float = 1e-10) -> LeadershipConstant:
    """Integral of the stationary correlation over the whole line."""
    if kernel.family == TABULATED:
        # trapezoid is exact for the piecewise-linear interpolant
        r = np.asarray(kernel.correlations)
        half = kernel.step * (r.sum() - 0.5 * r[0] - 0.5 * r[-1])
        return LeadershipConstant(float(2.0 * half), QUADRATURE)
    if kernel.family != LAMPERTI_FBM:
        raise ValueError("d_quadrature needs a stationary kernel")
    H = kernel.H
    res = integrate_semi_infinite(lambda t: lamperti_corr(t, H), tol=tol)
    return LeadershipConstant(float(2.0 * res.value), QUADRATURE)


def d_spectral(kernel: KernelSpec) -> LeadershipConstant:
    return LeadershipConstant(2.0 * math.pi * float(spectral_density(kernel, 0.0)), SPECTRAL)


def d_constant(kernel: KernelSpec) -> LeadershipConstant:
    """Leadership constant of a leader kernel; FBM uses its Lamperti transform."""
    if kernel.family in (FBM, LAMPERTI_FBM):
        return d_closed_form(kernel.H)
    return d_quadrature(kernel)


def hetero_pursuer_kernel(H_leader: float, H_i: float) -> KernelSpec:
    """Stationary kernel of the Lamperti transform (index H_leader) of t^(H-H_i) B_{H_i}(t).

    The scaling factor cancels exactly, leaving the unit-variance Lamperti
    kernel of index H_i whatever the leader's index.
    """
    _check_index(H_leader)
    return lamperti_fbm(H_i)
