"""Exact Gaussian path synthesis on uniform grids.

Stationary sequences use circulant embedding (Davies-Harte): one complex
normal vector pushed through an FFT gives two independent exact samples,
taken from its real and imaginary parts. FBM is the cumulative sum of a
circulant-sampled fractional Gaussian noise. Self-similar paths on
log-uniform grids come from the stationary Lamperti process, scaled back
by t^H.

Seeding: every (seed, chunk_index, stream) triple owns an independent
``numpy.random.SeedSequence(seed, spawn_key=(chunk_index, stream))``, so a
chunk's paths never depend on how chunks are distributed over workers.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable

import numpy as np

from leaderlab import kernels as K

NEG_EIG_RTOL = 1e-10
MAX_EMBED_DOUBLINGS = 3
CHOLESKY_CAP = 4096
DRAW_BLOCK = 512  # complex rows per FFT call, fixed so output never depends on memory tuning


class NegativeEigenvalue(ValueError):
    def __init__(self, min_value: float, size: int):
        super().__init__(f"circulant embedding of size {size} has eigenvalue {min_value:.3e}")
        self.min_value = min_value
        self.size = size


class NotPositiveDefinite(ValueError):
    pass


@dataclass(frozen=True)
class GridSpec:
    """Uniform grid in its coordinate; with ``log_time`` the coordinate is ln t."""

    t_start: float
    t_end: float
    points: int
    log_time: bool = False

    def __post_init__(self):
        if self.points < 2:
            raise ValueError("a grid needs at least 2 points")
        if not self.t_end > self.t_start:
            raise ValueError("grid needs t_end > t_start")
        if self.log_time and not self.t_start > 0:
            raise ValueError("log-time grid needs t_start > 0")

    @property
    def coords(self) -> np.ndarray:
        if self.log_time:
            return np.linspace(math.log(self.t_start), math.log(self.t_end), self.points)
        return np.linspace(self.t_start, self.t_end, self.points)

    @property
    def spacing(self) -> float:
        if self.log_time:
            return (math.log(self.t_end) - math.log(self.t_start)) / (self.points - 1)
        return (self.t_end - self.t_start) / (self.points - 1)

    @property
    def times(self) -> np.ndarray:
        c = self.coords
        if self.log_time:
            t = np.exp(c)
            t[0], t[-1] = self.t_start, self.t_end
            return t
        return c

    def index_of(self, t: float, rtol: float = 1e-9) -> int:
        """Index of the grid point equal to ``t`` (ValueError if ``t`` is not on the grid)."""
        times = self.times
        k = int(np.argmin(np.abs(times - t)))
        if abs(times[k] - t) > rtol * max(1.0, abs(t)):
            raise ValueError(f"time {t} is not a grid point")
        return k


@dataclass
class PathBatch:
    grid: GridSpec | None
    paths: np.ndarray
    kernel: K.KernelSpec | None
    seed: int
    batch_index: int = 0
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.paths.ndim != 2:
            raise ValueError("paths must be a (batch, points) matrix")
        if self.paths.size and not np.all(np.isfinite(self.paths)):
            raise ValueError("paths contain non-finite values")

    @property
    def batch(self) -> int:
        return self.paths.shape[0]


def stream_rng(seed: int, chunk_index: int = 0, stream: int = 0) -> np.random.Generator:
    if not 0 <= int(seed) < 2**64:
        raise ValueError("seed must be a 64-bit unsigned integer")
    ss = np.random.SeedSequence(int(seed), spawn_key=(int(chunk_index), int(stream)))
    return np.random.Generator(np.random.PCG64(ss))


def circulant_spectrum(correlations) -> np.ndarray:
    """Eigenvalues of the minimal circulant embedding of a symmetric Toeplitz matrix.

    ``correlations`` holds r(0), r(1), ..., r(h); the embedding has size 2h and
    first row (r(0), ..., r(h), r(h-1), ..., r(1)). Rounding-level negatives
    (above -1e-10 * max) are clipped to zero; anything lower raises
    NegativeEigenvalue.
    """
    r = np.asarray(correlations, dtype=float)
    if r.ndim != 1 or r.size < 2:
        raise ValueError("need at least r(0) and r(1)")
    row = np.concatenate([r, r[-2:0:-1]])
    eig = np.fft.rfft(row).real
    eig = np.concatenate([eig, eig[-2:0:-1]])
    lo = eig.min()
    top = eig.max()
    if lo < 0:
        if lo < -NEG_EIG_RTOL * top:
            raise NegativeEigenvalue(float(lo), row.size)
        eig = np.where(eig < 0, 0.0, eig)
    return eig


def _embedding_size(points: int) -> int:
    return max(2, 1 << (max(1, 2 * (points - 1)) - 1).bit_length())


def _circulant_factor(cov_at_lag: Callable, points: int) -> np.ndarray:
    """sqrt(eigenvalue / M) for the smallest workable power-of-two embedding."""
    size = _embedding_size(points)
    last = None
    for _ in range(MAX_EMBED_DOUBLINGS + 1):
        lags = np.arange(size // 2 + 1, dtype=float)
        try:
            eig = circulant_spectrum(cov_at_lag(lags))
            return np.sqrt(eig / size)
        except NegativeEigenvalue as exc:
            last = exc
            size *= 2
    raise last


def _circulant_draw(factor: np.ndarray, points: int, rows: int, rng: np.random.Generator) -> np.ndarray:
    out = np.empty((rows, points))
    size = factor.size
    done = 0
    while done < rows:
        pairs = min(DRAW_BLOCK, (rows - done + 1) // 2)
        w = rng.standard_normal((pairs, 2 * size)).view(np.complex128)
        w *= factor
        y = np.fft.fft(w, axis=1)[:, :points]
        take = min(2 * pairs, rows - done)
        both = np.empty((2 * pairs, points))
        both[0::2] = y.real
        both[1::2] = y.imag
        out[done:done + take] = both[:take]
        done += take
    return out


def _toeplitz_cov(cov_at_lag: Callable, points: int) -> np.ndarray:
    c = cov_at_lag(np.arange(points, dtype=float))
    idx = np.abs(np.subtract.outer(np.arange(points), np.arange(points)))
    return c[idx]


def _cholesky_factor(cov: np.ndarray, tol: float = 1e-10) -> np.ndarray:
    cov = np.asarray(cov, dtype=float)
    if cov.ndim != 2 or cov.shape[0] != cov.shape[1]:
        raise ValueError("covariance must be square")
    if cov.shape[0] > CHOLESKY_CAP:
        raise ValueError(f"covariance dimension {cov.shape[0]} exceeds cap {CHOLESKY_CAP}")
    if not np.allclose(cov, cov.T, rtol=0, atol=1e-12 * max(1.0, np.abs(cov).max())):
        raise ValueError("covariance must be symmetric")
    scale = max(float(np.max(np.diag(cov))), 1e-300)
    for jitter in (0.0, tol, 10 * tol, 100 * tol):
        try:
            return np.linalg.cholesky(cov + jitter * scale * np.eye(cov.shape[0]))
        except np.linalg.LinAlgError:
            continue
    raise NotPositiveDefinite("Cholesky factorization failed after jitter")


class StationarySampler:
    """Reusable exact sampler for one stationary covariance on a uniform grid.

    ``cov_at_lag`` maps integer lags (as floats) to covariances. The circulant
    route is tried first; if it fails after the allowed doublings the sampler
    falls back to a Cholesky factor (dimension permitting).
    """

    def __init__(self, cov_at_lag: Callable, points: int):
        self.points = points
        self.factor = None
        self.chol = None
        try:
            self.factor = _circulant_factor(cov_at_lag, points)
        except NegativeEigenvalue:
            if points > CHOLESKY_CAP:
                raise
            self.chol = _cholesky_factor(_toeplitz_cov(cov_at_lag, points))

    def draw(self, rng: np.random.Generator, rows: int) -> np.ndarray:
        if rows == 0:
            return np.empty((0, self.points))
        if self.factor is not None:
            return _circulant_draw(self.factor, self.points, rows, rng)
        return rng.standard_normal((rows, self.points)) @ self.chol.T


def _kernel_lag_cov(kernel: K.KernelSpec, spacing: float) -> Callable:
    return lambda lags: np.asarray(K.correlation(kernel, lags * spacing), dtype=float)


def _fgn_lag_cov(H: float, spacing: float) -> Callable:
    def cov(lags):
        k = np.abs(lags)
        h2 = 2.0 * H
        return 0.5 * spacing**h2 * (np.abs(k + 1) ** h2 - 2 * k**h2 + np.abs(k - 1) ** h2)
    return cov


class FBMSampler:
    """B_H on a uniform grid starting at 0 (cumulative fractional Gaussian noise)."""

    def __init__(self, H: float, grid: GridSpec):
        if grid.log_time or grid.t_start != 0.0:
            raise ValueError("FBM sampling needs a uniform grid starting at t = 0")
        self.points = grid.points
        self.noise = StationarySampler(_fgn_lag_cov(H, grid.spacing), grid.points - 1)

    def draw(self, rng: np.random.Generator, rows: int) -> np.ndarray:
        out = np.zeros((rows, self.points))
        if rows:
            np.cumsum(self.noise.draw(rng, rows), axis=1, out=out[:, 1:])
        return out


class ScaledSampler:
    """Multiplies another sampler's paths by a fixed positive profile (e.g. t^H)."""

    def __init__(self, base, profile: np.ndarray):
        self.base = base
        self.profile = profile
        self.points = base.points

    def draw(self, rng: np.random.Generator, rows: int) -> np.ndarray:
        return self.base.draw(rng, rows) * self.profile


def make_sampler(kernel: K.KernelSpec, grid: GridSpec, H_scale: float | None = None):
    """Sampler for one particle stream.

    Stationary kernels are sampled in the grid coordinate. An FBM kernel of
    index H_i is sampled as t^(H_scale - H_i) B_{H_i}(t) (H_scale defaults to
    H_i): directly on a uniform grid from 0, or through its stationary
    Lamperti process on a log-time grid.
    """
    if kernel.stationary:
        return StationarySampler(_kernel_lag_cov(kernel, grid.spacing), grid.points)
    H_i = kernel.H
    H = H_i if H_scale is None else H_scale
    if grid.log_time:
        base = StationarySampler(_kernel_lag_cov(K.hetero_pursuer_kernel(H, H_i), grid.spacing), grid.points)
        return ScaledSampler(base, grid.times**H)
    base = FBMSampler(H_i, grid)
    if H == H_i:
        return base
    t = grid.times
    with np.errstate(divide="ignore"):
        profile = np.where(t > 0, t ** (H - H_i), 0.0)
    return ScaledSampler(base, profile)


def sample_stationary(kernel: K.KernelSpec, grid: GridSpec, seed: int, batch: int,
                      batch_index: int = 0, stream: int = 0) -> PathBatch:
    if not kernel.stationary:
        raise ValueError("sample_stationary needs a stationary kernel")
    paths = make_sampler(kernel, grid).draw(stream_rng(seed, batch_index, stream), batch)
    return PathBatch(grid, paths, kernel, seed, batch_index)


def sample_fbm(H: float, grid: GridSpec, seed: int, batch: int,
               batch_index: int = 0, stream: int = 0) -> PathBatch:
    """Exact FBM paths; column 0 is exactly zero."""
    kernel = K.fbm(H)
    paths = FBMSampler(H, grid).draw(stream_rng(seed, batch_index, stream), batch)
    return PathBatch(grid, paths, kernel, seed, batch_index)


def sample_self_similar(H_leader: float, H_i: float, grid: GridSpec, seed: int, batch: int,
                        batch_index: int = 0, stream: int = 0) -> PathBatch:
    """Paths of t^(H_leader - H_i) B_{H_i}(t) on ``grid`` (uniform from 0 or log-time)."""
    kernel = K.fbm(H_i)
    sampler = make_sampler(kernel, grid, H_scale=H_leader)
    paths = sampler.draw(stream_rng(seed, batch_index, stream), batch)
    return PathBatch(grid, paths, kernel, seed, batch_index, meta={"H_scale": H_leader})


def cholesky_sample(cov, seed: int, batch: int, batch_index: int = 0, stream: int = 0,
                    grid: GridSpec | None = None, kernel: K.KernelSpec | None = None) -> PathBatch:
    """Exact samples with covariance ``cov`` via its (jittered if needed) Cholesky factor."""
    L = _cholesky_factor(cov)
    z = stream_rng(seed, batch_index, stream).standard_normal((batch, L.shape[0]))
    return PathBatch(grid, z @ L.T, kernel, seed, batch_index)


def chunk_sizes(total: int, chunk_rows: int) -> list[int]:
    """Canonical split of ``total`` rows into chunks of ``chunk_rows`` (last one short)."""
    if total < 0 or chunk_rows < 1:
        raise ValueError("need total >= 0 and chunk_rows >= 1")
    full, rest = divmod(total, chunk_rows)
    return [chunk_rows] * full + ([rest] if rest else [])


PATH_FORMAT = "leaderlab-paths/1"


def save_paths(batch: PathBatch, path) -> None:
    """Text dump: '# key=value' header lines, then one whitespace-separated row per path.

    Header keys: format, kernel, H, t_start, t_end, points, log_time, seed,
    batch_index. Values are printed with 17 significant digits.
    """
    g = batch.grid
    k = batch.kernel
    header = {
        "format": PATH_FORMAT,
        "kernel": k.family if k else "none",
        "H": repr(k.H) if k and k.H is not None else "none",
        "t_start": repr(g.t_start) if g else "none",
        "t_end": repr(g.t_end) if g else "none",
        "points": str(batch.paths.shape[1]),
        "log_time": str(bool(g.log_time)) if g else "False",
        "seed": str(batch.seed),
        "batch_index": str(batch.batch_index),
    }
    with open(path, "w") as fh:
        for key, val in header.items():
            fh.write(f"# {key}={val}\n")
        for row in batch.paths:
            fh.write(" ".join(f"{v:.17g}" for v in row) + "\n")


def load_paths(path) -> PathBatch:
    meta = {}
    rows = []
    for line in Path(path).read_text().splitlines():
        if line.startswith("#"):
            key, _, val = line[1:].strip().partition("=")
            meta[key] = val
        elif line.strip():
            rows.append([float(v) for v in line.split()])
    if meta.get("format") != PATH_FORMAT:
        raise ValueError(f"{path}: not a {PATH_FORMAT} file")
    points = int(meta["points"])
    paths = np.array(rows, dtype=float).reshape(-1, points)
    grid = None
    if meta["t_start"] != "none":
        grid = GridSpec(float(meta["t_start"]), float(meta["t_end"]), points, meta["log_time"] == "True")
    kernel = None
    if meta["kernel"] == K.FBM:
        kernel = K.fbm(float(meta["H"]))
    elif meta["kernel"] == K.LAMPERTI_FBM:
        kernel = K.lamperti_fbm(float(meta["H"]))
    return PathBatch(grid, paths, kernel, int(meta["seed"]), int(meta["batch_index"]), meta=meta)
