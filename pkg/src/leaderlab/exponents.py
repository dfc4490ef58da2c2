"""Leadership exponents from survival estimates and their predicted values."""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from leaderlab import kernels as K
from leaderlab import pursuit as P

Z95 = P.Z95
STATIONARY = "stationary"
SELF_SIMILAR = "self_similar"


class ZeroSurvivors(ValueError):
    pass


class DomainError(ValueError):
    pass


def formulation_family(formulation: str) -> str:
    return STATIONARY if formulation == P.STATIONARY_0T else SELF_SIMILAR


def normalizer(T: float, n: int, formulation: str) -> float:
    """T ln n for stationary runs, ln T ln n for self-similar ones."""
    if n < 2:
        raise ValueError("the leadership ratio needs n >= 2")
    if formulation_family(formulation) == STATIONARY:
        return T * math.log(n)
    if not T > 1:
        raise ValueError("self-similar ratio needs T > 1")
    return math.log(T) * math.log(n)


@dataclass(frozen=True)
class RatioEstimate:
    value: float
    ci_low: float
    ci_high: float
    one_sided: bool = False

    def overlaps(self, lo: float, hi: float) -> bool:
        return self.ci_low <= hi and self.ci_high >= lo


def leadership_ratio(est: P.MCEstimate, T: float, n: int, formulation: str,
                     strict: bool = False) -> RatioEstimate:
    """-ln p_hat / normalizer with a delta-method CI on ln p_hat.

    With no survivors only the lower bound from the rule-of-three upper
    probability exists; it is returned with ``one_sided`` set, or raised as
    ZeroSurvivors when ``strict``.
    """
    norm = normalizer(T, n, formulation)
    if est.survivors == 0:
        if strict:
            raise ZeroSurvivors(f"no survivors at T={T}, n={n}")
        return RatioEstimate(math.nan, -math.log(est.ci_high) / norm, math.inf, one_sided=True)
    p = est.p_hat
    value = -math.log(p) / norm
    se_log = math.sqrt((1.0 - p) / (est.samples * p))
    half = Z95 * se_log / norm
    return RatioEstimate(value, max(0.0, value - half), value + half)


@dataclass
class ExponentFit:
    slope: float
    intercept: float
    points: list  # (abscissa, log p_hat, weight)
    residual_rms: float
    prediction: float = math.nan
    grid_domain_ok: bool = True
    slope_se: float = math.nan
    n: int | None = None

    def __post_init__(self):
        if len(self.points) < 2:
            raise ValueError("a fit needs at least two points")
        if any(w <= 0 for _, _, w in self.points):
            raise ValueError("fit weights must be positive")

    @property
    def gamma(self) -> float:
        return -self.slope

    @property
    def gamma_ci(self) -> tuple[float, float]:
        return (-self.slope - Z95 * self.slope_se, -self.slope + Z95 * self.slope_se)

    def to_dict(self) -> dict:
        return {"n": self.n, "slope": self.slope, "intercept": self.intercept, "gamma": self.gamma,
                "slope_se": self.slope_se, "gamma_ci": list(self.gamma_ci), "residual_rms": self.residual_rms,
                "prediction": self.prediction, "grid_domain_ok": self.grid_domain_ok,
                "points": [list(p) for p in self.points]}


def weighted_line(x, y, w) -> tuple[float, float, float, float]:
    """Weighted least squares y = a + b x; returns (b, a, se(b), weighted rms residual)."""
    x, y, w = (np.asarray(v, dtype=float) for v in (x, y, w))
    sw = w.sum()
    xm, ym = (w * x).sum() / sw, (w * y).sum() / sw
    sxx = (w * (x - xm) ** 2).sum()
    if sxx <= 0:
        raise ValueError("abscissae must not all coincide")
    b = (w * (x - xm) * (y - ym)).sum() / sxx
    a = ym - b * xm
    res = y - a - b * x
    return float(b), float(a), float(math.sqrt(1.0 / sxx)), float(math.sqrt((w * res**2).sum() / sw))


def log_weight(est: P.MCEstimate) -> float:
    """Inverse delta-method variance of ln p_hat."""
    p = est.p_hat
    return est.samples * p / max(1.0 - p, 1.0 / est.samples)


def fit_gamma_n(sweep, n: int | None = None, prediction: float = math.nan,
                domain_ok: bool = True, min_span: float = 10.0) -> ExponentFit:
    """Weighted fit of ln p_hat against ln T; the slope estimates -gamma_n.

    ``sweep`` is a sequence of (T, MCEstimate). Survival values read off one
    capture-time CDF share samples, so the reported slope error treats them
    as independent and is somewhat optimistic.
    """
    pts = sorted((float(T), e) for T, e in sweep)
    if len(pts) < 3:
        raise ValueError("need at least three horizons")
    if pts[-1][0] / pts[0][0] < min_span:
        raise ValueError(f"horizons must span a factor {min_span}")
    if any(e.survivors == 0 for _, e in pts):
        raise ZeroSurvivors("every horizon needs survivors")
    x = [math.log(T) for T, _ in pts]
    y = [math.log(e.p_hat) for _, e in pts]
    w = [log_weight(e) for _, e in pts]
    b, a, se, rms = weighted_line(x, y, w)
    return ExponentFit(b, a, list(zip(x, y, w)), rms, prediction, domain_ok, se, n)


def fit_ratio_correction(n_values, ratios) -> tuple[float, float]:
    """Opt-in two-parameter model ratio = a + b / ln n; returns (a, b)."""
    x = 1.0 / np.log(np.asarray(n_values, dtype=float))
    b, a, _, _ = weighted_line(x, ratios, np.ones_like(x))
    return a, b


def prediction(kernel) -> float:
    """1/d of the leader's stationary kernel (FBM leaders use their Lamperti kernel)."""
    if isinstance(kernel, P.EnsembleConfig):
        kernel = kernel.leader
    if kernel.family == K.FBM:
        kernel = K.lamperti_fbm(kernel.H)
    return 1.0 / K.d_constant(kernel).d


def admissible(T: float, n: int, family: str, c: float = 1.1, C: float = 5.0) -> bool:
    ln_n = math.log(n)
    if family == STATIONARY:
        return T > 1 and c * math.log(T) < ln_n < C * T
    if not T > 1:
        return False
    return c * math.log(math.log(T)) < ln_n <= C * math.log(T)


@dataclass(frozen=True)
class SweepPlan:
    cells: tuple[tuple[float, int], ...]
    formulation: str = P.STATIONARY_0T
    c: float = 1.1
    C: float = 5.0
    dropped: tuple[tuple[float, int], ...] = ()

    def __post_init__(self):
        if not self.c > 1 or not self.C > 0:
            raise DomainError("domain constants need c > 1 and C > 0")
        cells = tuple((float(T), int(n)) for T, n in self.cells)
        if not cells:
            raise DomainError("a sweep plan needs at least one (T, n) cell")
        object.__setattr__(self, "cells", cells)
        fam = formulation_family(self.formulation)
        for T, n in cells:
            if n < 2 or not admissible(T, n, fam, self.c, self.C):
                raise DomainError(f"cell (T={T:g}, n={n}) violates the {fam} admissible domain "
                                  f"with c={self.c:g}, C={self.C:g}")

    @classmethod
    def product(cls, T_values, n_values, formulation: str = P.STATIONARY_0T,
                c: float = 1.1, C: float = 5.0) -> "SweepPlan":
        """All admissible (T, n) pairs; inadmissible ones are kept in ``dropped``."""
        fam = formulation_family(formulation)
        keep, drop = [], []
        for T in T_values:
            for n in n_values:
                (keep if n >= 2 and admissible(T, n, fam, c, C) else drop).append((float(T), int(n)))
        return cls(tuple(keep), formulation, c, C, tuple(drop))

    @property
    def grid_domain_ok(self) -> bool:
        return True  # enforced at construction


@dataclass
class SweepRow:
    T: float
    n: int
    seed: int
    estimate: P.MCEstimate | None
    ratio: RatioEstimate | None
    error: str = ""


@dataclass
class SweepTable:
    plan: SweepPlan
    config: P.EnsembleConfig
    rows: list[SweepRow]
    prediction: float
    coupled: bool = False
    fits: list[ExponentFit] = field(default_factory=list)

    def row(self, T: float, n: int) -> SweepRow:
        for r in self.rows:
            if r.T == T and r.n == n:
                return r
        raise KeyError((T, n))


def cell_seed(seed: int, cell_index: int) -> int:
    return int(np.random.SeedSequence([int(seed), int(cell_index)]).generate_state(1, np.uint64)[0] >> 1)


def sweep(plan: SweepPlan, base: P.EnsembleConfig, seed: int, samples: int, *,
          coupled: bool = False, workers: int | None = None) -> SweepTable:
    """Survival and leadership ratio for every plan cell.

    Independent mode gives each cell its own derived seed. Coupled mode runs
    one simulation to the largest (T, n) and reads every cell off it, so
    estimates are monotone in T and n sample by sample.
    """
    if base.formulation != plan.formulation:
        raise ValueError("plan and base config disagree on the formulation")
    if len(base.pursuers) != 1:
        raise ValueError("sweeps need a single pursuer kernel")
    pred = prediction(base.leader)
    rows: list[SweepRow] = []
    if coupled:
        Ts = sorted({T for T, _ in plan.cells})
        ns = sorted({n for _, n in plan.cells})
        try:
            cells = P.coupled_survival(base, Ts, ns, seed, samples, workers=workers)
            got, err = cells.estimates, ""
        except Exception as exc:  # recorded per cell, the table is still written
            got, err = {}, f"{type(exc).__name__}: {exc}"
        for T, n in plan.cells:
            est = got.get((T, n))
            rows.append(SweepRow(T, n, seed, est, None if est is None else
                                 leadership_ratio(est, T, n, plan.formulation), err))
    else:
        for i, (T, n) in enumerate(plan.cells):
            s = cell_seed(seed, i)
            try:
                est = P.estimate_survival(replace(base.with_n(n), T=T), s, samples, workers=workers)
                rows.append(SweepRow(T, n, s, est, leadership_ratio(est, T, n, plan.formulation)))
            except Exception as exc:
                rows.append(SweepRow(T, n, s, None, None, f"{type(exc).__name__}: {exc}"))
    table = SweepTable(plan, base, rows, pred, coupled)
    if formulation_family(plan.formulation) == SELF_SIMILAR:
        for n in sorted({r.n for r in rows}):
            pts = [(r.T, r.estimate) for r in rows if r.n == n and r.estimate is not None]
            try:
                table.fits.append(fit_gamma_n(pts, n, pred * math.log(n)))
            except ValueError:
                pass
    return table


SWEEP_FIELDS = P.CSV_FIELDS + ("leadership_ratio", "ratio_ci_low", "ratio_ci_high", "prediction",
                               "domain_ok", "error")


def sweep_csv_rows(table: SweepTable) -> list[dict]:
    f = P.format_float
    out = []
    for r in table.rows:
        cfg = replace(table.config.with_n(r.n), T=r.T)
        if r.estimate is not None:
            row = P.csv_row(cfg, r.seed, r.estimate)
        else:
            row = P.csv_row(cfg, r.seed, P.MCEstimate.from_counts(0, 1))
            for k in ("samples", "p_hat", "std_error", "ci_low", "ci_high"):
                row[k] = ""
        rat = r.ratio
        row.update({
            "leadership_ratio": "" if rat is None else f(rat.value),
            "ratio_ci_low": "" if rat is None else f(rat.ci_low),
            "ratio_ci_high": "" if rat is None else f(rat.ci_high),
            "prediction": f(table.prediction),
            "domain_ok": "true" if table.plan.grid_domain_ok else "false",
            "error": r.error,
        })
        out.append(row)
    return out


def sweep_summary(table: SweepTable) -> dict:
    return {
        "schema": "leaderlab.sweep/1",
        "formulation": table.plan.formulation,
        "kernel": table.config.leader_tag,
        "prediction": table.prediction,
        "coupled": table.coupled,
        "domain": {"c": table.plan.c, "C": table.plan.C,
                   "dropped": [list(x) for x in table.plan.dropped]},
        "cells": [{"T": r.T, "n": r.n, "seed": r.seed,
                   "p_hat": None if r.estimate is None else r.estimate.p_hat,
                   "survivors": None if r.estimate is None else r.estimate.survivors,
                   "leadership_ratio": None if r.ratio is None or r.ratio.one_sided else r.ratio.value,
                   "ratio_ci": None if r.ratio is None else [r.ratio.ci_low, r.ratio.ci_high],
                   "one_sided": None if r.ratio is None else r.ratio.one_sided,
                   "error": r.error} for r in table.rows],
        "fits": [ft.to_dict() for ft in table.fits],
        "note": "the difference between leadership_ratio and prediction is the finite-size o(1) term",
    }
