"""Monte Carlo estimation of leader survival probabilities.

Every estimate is built from per-sample first-capture grid indices. Each
chunk of samples draws the leader path, then pursuers one at a time; for
every pursuer the first grid index where its gap to the leader reaches the
level is folded into a running minimum. A sample stops receiving pursuers
once its running minimum is at or below the event's pruning floor (by
default the first index of the interval, where no later pursuer can change
anything). Chunks return integer histograms of the running minimum, so
aggregation is exact and independent of worker count and order.
"""

from __future__ import annotations

import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np

from leaderlab import kernels as K
from leaderlab.sampling import GridSpec, chunk_sizes, make_sampler, stream_rng

STATIONARY_0T = "stationary_0T"
SELF_SIMILAR_0T = "self_similar_0T"
SELF_SIMILAR_1T = "self_similar_1T"
FORMULATIONS = (STATIONARY_0T, SELF_SIMILAR_0T, SELF_SIMILAR_1T)
DEFAULT_LEVEL = {STATIONARY_0T: 0.0, SELF_SIMILAR_0T: 1.0, SELF_SIMILAR_1T: 0.0}

UNIFORM = "uniform"
LOG = "log"
NO_CORRECTION = "none"
BROWNIAN_BRIDGE = "brownian_bridge"

Z95 = 1.959963984540054
WORKERS_ENV = "LEADERLAB_WORKERS"
CHUNK_BUDGET = 1 << 21  # path values per stream held at once

CSV_SCHEMA = "leaderlab.pursuit/1"
CSV_FIELDS = ("formulation", "kernel", "n", "T", "density", "level", "seed", "samples",
              "p_hat", "std_error", "ci_low", "ci_high")


@dataclass(frozen=True)
class EnsembleConfig:
    """One pursuit experiment.

    ``pursuers`` lists distinct kernels with multiplicities; ``density`` is
    grid points per unit time (per unit log-time on log grids). Self-similar
    formulations take FBM kernels; a pursuer FBM(H_i) under an FBM(H) leader
    stands for t^(H - H_i) B_{H_i}(t).
    """

    leader: K.KernelSpec
    pursuers: tuple[tuple[K.KernelSpec, int], ...]
    T: float
    formulation: str = STATIONARY_0T
    level: float | None = None
    density: int = 64
    grid: str | None = None
    t_min: float = 0.01
    continuity: str = NO_CORRECTION
    chunk_rows: int | None = None

    def __post_init__(self):
        if self.formulation not in FORMULATIONS:
            raise ValueError(f"unknown formulation {self.formulation!r}")
        object.__setattr__(self, "pursuers", tuple((k, int(m)) for k, m in self.pursuers))
        if any(m < 1 for _, m in self.pursuers) or self.n < 1:
            raise ValueError("need n >= 1 pursuers with positive multiplicities")
        if not self.T > 0:
            raise ValueError("horizon T must be positive")
        if self.formulation == SELF_SIMILAR_1T and not self.T > 1:
            raise ValueError("self_similar_1T needs T > 1")
        if self.density < 1:
            raise ValueError("density must be >= 1")
        stationary = self.formulation == STATIONARY_0T
        for k in self.kernels:
            if stationary and not k.stationary:
                raise ValueError("stationary formulation needs stationary kernels")
            if not stationary and k.family != K.FBM:
                raise ValueError("self-similar formulations need FBM kernels (X(0) = 0)")
        if self.grid_kind not in (UNIFORM, LOG):
            raise ValueError(f"unknown grid kind {self.grid!r}")
        if self.grid_kind == LOG and stationary:
            raise ValueError("log grids apply to self-similar formulations only")
        if not self.t_min > 0:
            raise ValueError("t_min must be positive")
        if self.continuity not in (NO_CORRECTION, BROWNIAN_BRIDGE):
            raise ValueError(f"unknown continuity correction {self.continuity!r}")
        if self.continuity == BROWNIAN_BRIDGE and (
                stationary or any(k.H != 0.5 for k in self.kernels)):
            raise ValueError("brownian_bridge correction needs FBM(0.5) particles in a self-similar formulation")

    @classmethod
    def homogeneous(cls, kernel: K.KernelSpec, n: int, T: float, **kw) -> "EnsembleConfig":
        return cls(kernel, ((kernel, n),), T, **kw)

    @property
    def n(self) -> int:
        return sum(m for _, m in self.pursuers)

    @property
    def kernels(self) -> list[K.KernelSpec]:
        return [self.leader] + [k for k, _ in self.pursuers]

    @property
    def pursuer_list(self) -> list[K.KernelSpec]:
        return [k for k, m in self.pursuers for _ in range(m)]

    @property
    def level_value(self) -> float:
        return DEFAULT_LEVEL[self.formulation] if self.level is None else float(self.level)

    @property
    def grid_kind(self) -> str:
        if self.grid is not None:
            return self.grid
        return LOG if self.formulation == SELF_SIMILAR_1T else UNIFORM

    @property
    def leader_tag(self) -> str:
        return self.leader.tag

    def with_n(self, n: int) -> "EnsembleConfig":
        if len(self.pursuers) != 1:
            raise ValueError("with_n needs a single pursuer kernel")
        return replace(self, pursuers=((self.pursuers[0][0], n),))

    def grid_spec(self) -> GridSpec:
        T, dens = self.T, self.density
        if self.grid_kind == UNIFORM:
            return GridSpec(0.0, T, max(2, int(round(T * dens)) + 1))
        if self.formulation == SELF_SIMILAR_1T:
            if not T > 1:
                raise ValueError("log grid needs T > 1")
            return GridSpec(1.0, T, max(2, int(round(math.log(T) * dens)) + 1), log_time=True)
        # octave-aligned from the horizon, so T / 2^j are grid points; starts at or below t_min
        if not T > self.t_min:
            raise ValueError(f"log grid needs T > t_min = {self.t_min}")
        q = max(1, int(round(dens * math.log(2.0))))
        h = math.log(2.0) / q
        steps = int(math.ceil(math.log(T / self.t_min) / h - 1e-9))
        return GridSpec(T * math.exp(-steps * h), T, steps + 1, log_time=True)

    def start_index(self, grid: GridSpec) -> int:
        """First grid index inside the formulation's interval."""
        if self.formulation == SELF_SIMILAR_1T and not grid.log_time:
            return grid.index_of(1.0)
        if self.formulation == SELF_SIMILAR_1T:
            return grid.index_of(1.0) if grid.t_start < 1.0 else 0
        return 0


@dataclass(frozen=True)
class MCEstimate:
    p_hat: float
    samples: int
    std_error: float
    ci_low: float
    ci_high: float
    survivors: int
    confidence: float = 0.95
    zero_survivors: bool = False

    def __post_init__(self):
        if not (0.0 <= self.ci_low <= self.p_hat <= self.ci_high <= 1.0):
            raise ValueError("MCEstimate needs 0 <= ci_low <= p_hat <= ci_high <= 1")

    @classmethod
    def from_counts(cls, survivors: int, samples: int) -> "MCEstimate":
        """Wilson score interval at 95%; with no survivors the upper bound is 3/N."""
        survivors, samples = int(survivors), int(samples)
        if samples < 1 or not 0 <= survivors <= samples:
            raise ValueError("need samples >= 1 and 0 <= survivors <= samples")
        p = survivors / samples
        se = math.sqrt(p * (1.0 - p) / samples)
        if survivors == 0:
            return cls(0.0, samples, 0.0, 0.0, min(1.0, 3.0 / samples), 0, zero_survivors=True)
        lo, hi = wilson_interval(survivors, samples)
        return cls(p, samples, se, min(lo, p), max(hi, p), survivors)

    def contains(self, p: float) -> bool:
        return self.ci_low <= p <= self.ci_high


def wilson_interval(successes: int, total: int, z: float = Z95) -> tuple[float, float]:
    p = successes / total
    z2 = z * z
    denom = 1.0 + z2 / total
    center = (p + z2 / (2 * total)) / denom
    half = z * math.sqrt(p * (1 - p) / total + z2 / (4 * total * total)) / denom
    return max(0.0, center - half), min(1.0, center + half)


@dataclass
class Tally:
    """Associative, commutative survival accumulator."""

    survivors: int = 0
    samples: int = 0
    sum_sq: int = 0

    def add(self, indicator: np.ndarray) -> "Tally":
        s = int(np.count_nonzero(indicator))
        return Tally(self.survivors + s, self.samples + int(indicator.size), self.sum_sq + s)

    def __add__(self, other: "Tally") -> "Tally":
        return Tally(self.survivors + other.survivors, self.samples + other.samples, self.sum_sq + other.sum_sq)

    def estimate(self) -> MCEstimate:
        return MCEstimate.from_counts(self.survivors, self.samples)


# ---------------------------------------------------------------------------
# engine


@dataclass(frozen=True)
class _Event:
    level: float
    start: int
    stride: int = 1
    floor: int | None = None  # prune once the running min is <= floor (default: start)
    horizon: int | None = None  # index whose survival feeds the joint pattern table


@dataclass
class _Plan:
    samplers: list
    stream_keys: list[int]
    events: list[_Event]
    checkpoints: list[int]
    points: int
    chunk_rows: int
    times: np.ndarray
    bridge_rate: float | None = None


def _first_capture(gap: np.ndarray, ev: _Event, points: int, times: np.ndarray,
                   uniforms: np.ndarray | None, bridge_rate: float | None) -> np.ndarray:
    cols = np.arange(ev.start, points, ev.stride)
    dist = ev.level - gap[:, cols]  # > 0 while below the level
    hit = dist <= 0
    if bridge_rate is not None and cols.size > 1:
        prod = dist[:, :-1] * dist[:, 1:]
        dt = np.diff(times[cols])
        with np.errstate(over="ignore"):
            p_cross = np.exp(-2.0 * np.maximum(prod, 0.0) / (bridge_rate * dt))
        cross = (prod <= 0) | (uniforms < p_cross)
        hit[:, 1:] |= cross
    any_hit = hit.any(axis=1)
    first = np.argmax(hit, axis=1)
    return np.where(any_hit, cols[first], points)


def _chunk_job(args) -> tuple[np.ndarray, np.ndarray]:
    plan, seed, chunk_index, rows = args
    P = plan.points
    E = len(plan.events)
    hist = np.zeros((E, len(plan.checkpoints), P + 1), dtype=np.int64)
    lead = plan.samplers[0].draw(stream_rng(seed, chunk_index, plan.stream_keys[0]), rows)
    capmin = np.full((E, rows), P, dtype=np.int64)
    floors = np.array([ev.start if ev.floor is None else ev.floor for ev in plan.events])[:, None]
    alive = np.arange(rows)
    strides = sorted({ev.stride for ev in plan.events})
    c_pos = 0
    n_max = plan.checkpoints[-1]
    for i in range(1, n_max + 1):
        if alive.size:
            rng = stream_rng(seed, chunk_index, plan.stream_keys[i])
            gap = plan.samplers[i].draw(rng, alive.size) - lead[alive]
            unif = {}
            if plan.bridge_rate is not None:
                for s in strides:
                    unif[s] = rng.random((alive.size, len(range(0, P, s)) - 1))
            for e, ev in enumerate(plan.events):
                cap = _first_capture(gap, ev, P, plan.times, _bridge_uniforms(unif, ev, P),
                                     plan.bridge_rate)
                np.minimum(capmin[e, alive], cap, out=cap)
                capmin[e, alive] = cap
            keep = np.any(capmin[:, alive] > floors, axis=0)
            alive = alive[keep]
        while c_pos < len(plan.checkpoints) and plan.checkpoints[c_pos] == i:
            for e in range(E):
                hist[e, c_pos] = np.bincount(capmin[e], minlength=P + 1)
            c_pos += 1
    horizons = np.array([P - 1 if ev.horizon is None else ev.horizon for ev in plan.events])[:, None]
    alive_bits = (capmin > horizons).astype(np.int64)
    code = (alive_bits * (1 << np.arange(E))[:, None]).sum(axis=0)
    patterns = np.bincount(code, minlength=1 << E)
    return hist, patterns


def _bridge_uniforms(unif: dict, ev: _Event, points: int):
    if not unif:
        return None
    u = unif[ev.stride]
    # uniforms are laid out on the full strided grid from 0; events starting later use a suffix
    first = ev.start // ev.stride if ev.start % ev.stride == 0 else None
    if first is None:
        raise ValueError("event start must be a multiple of its stride")
    return u[:, first:]


def workers_from_env() -> int:
    try:
        return max(1, int(os.environ.get(WORKERS_ENV, "1")))
    except ValueError:
        return 1


def _run(plan: _Plan, seed: int, samples: int, workers: int | None = None):
    if samples < 1:
        raise ValueError("samples must be >= 1")
    sizes = chunk_sizes(samples, plan.chunk_rows)
    jobs = [(plan, seed, c, rows) for c, rows in enumerate(sizes)]
    workers = workers_from_env() if workers is None else workers
    if workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_chunk_job, jobs))
    else:
        results = [_chunk_job(j) for j in jobs]
    hist = sum(r[0] for r in results)
    patterns = sum(r[1] for r in results)
    return hist, patterns


def _default_chunk_rows(points: int) -> int:
    return int(min(16384, max(64, CHUNK_BUDGET // points)))


def _build_plan(config: EnsembleConfig, grid: GridSpec, events: list[_Event], checkpoints,
                stream_permutation=None) -> _Plan:
    H_scale = config.leader.H if config.formulation != STATIONARY_0T else None
    cache: dict = {}

    def sampler_for(k):
        if k not in cache:
            cache[k] = make_sampler(k, grid, H_scale=H_scale)
        return cache[k]

    samplers = [sampler_for(config.leader)] + [sampler_for(k) for k in config.pursuer_list]
    keys = list(range(config.n + 1))
    if stream_permutation is not None:
        keys = [int(k) for k in stream_permutation]
        if sorted(keys) != list(range(config.n + 1)):
            raise ValueError("stream_permutation must permute 0..n")
    checkpoints = sorted({int(c) for c in checkpoints})
    if not checkpoints or checkpoints[0] < 1 or checkpoints[-1] > config.n:
        raise ValueError("checkpoints must lie in 1..n")
    rate = 2.0 if config.continuity == BROWNIAN_BRIDGE else None
    chunk = config.chunk_rows or _default_chunk_rows(grid.points)
    return _Plan(samplers, keys, events, checkpoints, grid.points, chunk, grid.times, rate)


def _survivors_after(hist_row: np.ndarray, index: int) -> int:
    """Samples whose first capture index exceeds ``index``."""
    return int(hist_row[index + 1:].sum())


# ---------------------------------------------------------------------------
# public operations


def leader_gap(leader: np.ndarray, pursuers) -> np.ndarray:
    """M_n(t) = max_i (X_i(t) - X_0(t)) for (batch, points) arrays."""
    lead = np.asarray(getattr(leader, "paths", leader), dtype=float)
    out = None
    for p in pursuers:
        x = np.asarray(getattr(p, "paths", p), dtype=float)
        if x.shape != lead.shape:
            raise ValueError(f"grid mismatch: pursuer {x.shape} vs leader {lead.shape}")
        gap = x - lead
        out = gap if out is None else np.maximum(out, gap)
    if out is None:
        raise ValueError("need at least one pursuer")
    return out


def estimate_survival(config: EnsembleConfig, seed: int, samples: int, *,
                      workers: int | None = None, stream_permutation=None) -> MCEstimate:
    """P(M_n(t) < level at every grid time of the formulation's interval)."""
    grid = config.grid_spec()
    start = config.start_index(grid)
    plan = _build_plan(config, grid, [_Event(config.level_value, start)], [config.n], stream_permutation)
    hist, _ = _run(plan, seed, samples, workers)
    return MCEstimate.from_counts(_survivors_after(hist[0, 0], grid.points - 1), samples)


@dataclass
class CaptureCDF:
    """Empirical distribution of the first grid time with M_n >= level."""

    times: np.ndarray
    counts: np.ndarray  # counts[k] = samples first captured at grid index k; counts[-1] = never
    samples: int
    start_index: int = 0

    @property
    def cdf(self) -> np.ndarray:
        return np.cumsum(self.counts[:-1]) / self.samples

    def __call__(self, t) -> np.ndarray:
        """Right-continuous step function P(tau <= t)."""
        t = np.asarray(t, dtype=float)
        k = np.searchsorted(self.times, t, side="right") - 1
        vals = np.concatenate([[0.0], self.cdf])
        return vals[np.clip(k + 1, 0, len(vals) - 1)]

    def survival(self, T: float) -> MCEstimate:
        """P(tau > T); T must be a grid time, since reading between nodes would bias upward."""
        k = int(np.argmin(np.abs(self.times - T)))
        if abs(self.times[k] - T) > 1e-9 * max(1.0, abs(T)):
            raise ValueError(f"horizon {T} is not a grid time")
        return MCEstimate.from_counts(int(self.counts[k + 1:].sum()), self.samples)

    def quantile(self, q: float) -> float:
        k = int(np.searchsorted(self.cdf, q, side="left"))
        return float(self.times[k]) if k < len(self.times) else math.inf


def capture_time_cdf(config: EnsembleConfig, seed: int, samples: int, *,
                     workers: int | None = None) -> CaptureCDF:
    grid = config.grid_spec()
    start = config.start_index(grid)
    plan = _build_plan(config, grid, [_Event(config.level_value, start)], [config.n])
    hist, _ = _run(plan, seed, samples, workers)
    return CaptureCDF(grid.times, hist[0, 0], samples, start)


@dataclass
class FormulationComparison:
    interval_1T: MCEstimate  # P(M_n([1,T]) <= 0)
    interval_0T: MCEstimate  # P(M_n([0,T]) <= 1)
    baseline_0T: MCEstimate  # P(M_n([0,T]) <= 0), below both by inclusion
    patterns: dict = field(default_factory=dict)
    grid: GridSpec | None = None

    @property
    def log_ratio(self) -> float:
        return math.log(self.interval_1T.p_hat) / math.log(self.interval_0T.p_hat)

    @property
    def violations(self) -> int:
        """Samples breaking {M[0,T] <= 0} within both {M[0,T] <= 1} and {M[1,T] <= 0}."""
        return sum(c for (a1, a2, a3), c in self.patterns.items() if a3 and not (a1 and a2))


def shared_log_grid(T: float, density: int, t_min: float) -> tuple[GridSpec, int]:
    """Log-time grid from below ``t_min`` to T containing t = 1 exactly; returns (grid, index of 1)."""
    if not T > 1:
        raise ValueError("need T > 1")
    steps = max(1, int(round(math.log(T) * density)))
    h = math.log(T) / steps
    below = max(1, int(math.ceil(math.log(1.0 / t_min) / h - 1e-9)))
    return GridSpec(math.exp(-below * h), T, below + steps + 1, log_time=True), below


def compare_formulations(config: EnsembleConfig, seed: int, samples: int, *,
                         workers: int | None = None) -> FormulationComparison:
    """P(M_n([1,T]) <= 0) and P(M_n([0,T]) <= 1) from the same paths.

    Both come from one log-time grid starting just below ``config.t_min``;
    [0, t_min) is not observed (there X = o(1) while the level is 1).
    """
    if config.formulation == STATIONARY_0T:
        raise ValueError("compare_formulations needs self-similar kernels")
    grid, one = shared_log_grid(config.T, config.density, config.t_min)
    last = grid.points - 1
    events = [_Event(0.0, one, floor=last, horizon=last),
              _Event(1.0, 0, floor=last, horizon=last),
              _Event(0.0, 0, floor=last, horizon=last)]
    cfg = replace(config, grid=LOG)
    plan = _build_plan(cfg, grid, events, [config.n])
    hist, pat = _run(plan, seed, samples, workers)
    ests = [MCEstimate.from_counts(_survivors_after(hist[e, 0], last), samples) for e in range(3)]
    patterns = {tuple(bool(code >> b & 1) for b in range(3)): int(c) for code, c in enumerate(pat)}
    return FormulationComparison(ests[0], ests[1], ests[2], patterns, grid)


@dataclass
class RefinementRow:
    density: float
    stride: int
    estimate: MCEstimate


def refinement_study(config: EnsembleConfig, seed: int, samples: int, strides=(1, 2, 4), *,
                     workers: int | None = None) -> list[RefinementRow]:
    """Survival on the config grid and its coarsenings, all from the same paths.

    Without a continuity correction the coarse-grid survival event contains
    the fine-grid one sample by sample, so p_hat can only drop as the grid is
    refined; the size of the drop is the discretization bias being measured.
    """
    grid = config.grid_spec()
    start = config.start_index(grid)
    last = grid.points - 1
    for s in strides:
        if last % s or start % s:
            raise ValueError(f"stride {s} does not divide the grid (points - 1 = {last})")
    strides = sorted(set(strides))
    events = [_Event(config.level_value, start, stride=s, floor=start) for s in strides]
    plan = _build_plan(config, grid, events, [config.n])
    hist, _ = _run(plan, seed, samples, workers)
    return [RefinementRow(config.density / s, s, MCEstimate.from_counts(_survivors_after(hist[e, 0], last), samples))
            for e, s in enumerate(strides)]


@dataclass
class SweepCells:
    """Survival for every (T, n) pair from one coupled simulation."""

    grid: GridSpec
    T_values: list[float]
    n_values: list[int]
    estimates: dict  # (T, n) -> MCEstimate


def coupled_survival(config: EnsembleConfig, T_values, n_values, seed: int, samples: int, *,
                     workers: int | None = None) -> SweepCells:
    """Survival at several horizons and ensemble sizes on shared paths.

    Paths run to max(T) with max(n) pursuers; the first n pursuers define the
    n-ensemble and the grid prefix up to T defines horizon T, so estimates are
    monotone in both T and n sample by sample. Samples captured before the
    smallest horizon are pruned.
    """
    T_values = sorted({float(t) for t in T_values})
    n_values = sorted({int(n) for n in n_values})
    big = replace(config.with_n(n_values[-1]), T=T_values[-1])
    grid = big.grid_spec()
    start = big.start_index(grid)
    idx = {T: grid.index_of(T) for T in T_values}
    ev = _Event(big.level_value, start, floor=idx[T_values[0]])
    plan = _build_plan(big, grid, [ev], n_values)
    hist, _ = _run(plan, seed, samples, workers)
    est = {}
    for c, n in enumerate(n_values):
        for T in T_values:
            est[(T, n)] = MCEstimate.from_counts(_survivors_after(hist[0, c], idx[T]), samples)
    return SweepCells(grid, T_values, n_values, est)


def correlation_inequality_check(kernel: K.KernelSpec, T: float, a: float, pieces: int,
                                 seed: int, samples: int, density: int = 32) -> dict:
    """Compare P(|X| <= a on [0,T]) with the product over ``pieces`` equal sub-intervals.

    The whole-interval and per-piece estimates come from the same stationary
    paths; the Gaussian correlation inequality says whole >= product.
    """
    steps = int(round(T * density))
    if steps % pieces:
        raise ValueError("pieces must divide the number of grid steps")
    grid = GridSpec(0.0, T, steps + 1)
    sampler = make_sampler(kernel, grid)
    inside_all = Tally()
    per = [Tally() for _ in range(pieces)]
    w = steps // pieces
    for c, rows in enumerate(chunk_sizes(samples, _default_chunk_rows(grid.points))):
        x = np.abs(sampler.draw(stream_rng(seed, c, 0), rows)) <= a
        inside_all = inside_all.add(x.all(axis=1))
        for j in range(pieces):
            per[j] = per[j].add(x[:, j * w:(j + 1) * w + 1].all(axis=1))
    whole = inside_all.estimate()
    parts = [t.estimate() for t in per]
    prod = float(np.prod([p.p_hat for p in parts]))
    prod_hi = float(np.prod([p.ci_high for p in parts]))
    return {"whole": whole, "pieces": parts, "product": prod,
            "holds": whole.ci_high >= prod_hi or whole.p_hat >= prod}


def format_float(x: float) -> str:
    return f"{x:.17g}"


def csv_row(config: EnsembleConfig, seed: int, est: MCEstimate, T: float | None = None,
            n: int | None = None) -> dict:
    return {
        "formulation": config.formulation,
        "kernel": config.leader_tag,
        "n": str(config.n if n is None else n),
        "T": format_float(config.T if T is None else T),
        "density": str(config.density),
        "level": format_float(config.level_value),
        "seed": str(seed),
        "samples": str(est.samples),
        "p_hat": format_float(est.p_hat),
        "std_error": format_float(est.std_error),
        "ci_low": format_float(est.ci_low),
        "ci_high": format_float(est.ci_high),
    }
