"""Experiment configuration files (YAML) with strict, line-aware validation."""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import yaml

from leaderlab import exponents as X
from leaderlab import kernels as K
from leaderlab import pursuit as P

SURVIVAL = "survival"
CAPTURE_CDF = "capture_cdf"
SWEEP = "sweep"
COMPARE = "compare"
THEORY_REPORT = "theory_report"
KERNEL_TABLE = "kernel_table"
KINDS = (SURVIVAL, CAPTURE_CDF, SWEEP, COMPARE, THEORY_REPORT, KERNEL_TABLE)

TOP_KEYS = {"experiment", "seed", "samples", "output_dir", "formats", "ensemble", "capture",
            "sweep", "refinement", "theory", "kernel_table"}
ENSEMBLE_KEYS = {"leader", "pursuers", "n", "T", "formulation", "level", "density", "grid",
                 "t_min", "continuity", "chunk_rows"}
KERNEL_KEYS = {"family", "H", "file", "correlations", "step"}
PURSUER_KEYS = {"kernel", "count"}
CAPTURE_KEYS = {"horizons", "fit"}
SWEEP_KEYS = {"T", "n", "c", "C", "coupled", "drop_inadmissible"}
THEORY_KEYS = {"samples"}
TABLE_KEYS = {"H"}
FORMATS = {"csv", "json", "txt"}


class ConfigError(ValueError):
    def __init__(self, message: str, line: int | None = None, field_name: str | None = None):
        self.line = line
        self.field_name = field_name
        where = f"line {line}: " if line is not None else ""
        what = f"{field_name}: " if field_name else ""
        super().__init__(f"{where}{what}{message}")


@dataclass
class Node:
    """A parsed YAML value with the line it started on (1-based)."""

    value: object
    line: int


def _convert(node) -> Node:
    line = node.start_mark.line + 1
    if isinstance(node, yaml.MappingNode):
        out = {}
        for k, v in node.value:
            key = _convert(k).value
            if key in out:
                raise ConfigError("duplicate key", k.start_mark.line + 1, str(key))
            out[key] = (_convert(v), k.start_mark.line + 1)
        return Node(out, line)
    if isinstance(node, yaml.SequenceNode):
        return Node([_convert(v) for v in node.value], line)
    return Node(yaml.safe_load(yaml.serialize(node)), line)


def parse_text(text: str) -> Node:
    try:
        root = yaml.compose(text, Loader=yaml.SafeLoader)
    except yaml.YAMLError as exc:
        mark = getattr(exc, "problem_mark", None)
        raise ConfigError(f"invalid YAML ({getattr(exc, 'problem', exc)})",
                          None if mark is None else mark.line + 1) from None
    if root is None or not isinstance(root, yaml.MappingNode):
        raise ConfigError("config must be a mapping", 1)
    return _convert(root)


class _Section:
    def __init__(self, node: Node, name: str, allowed: set[str]):
        if not isinstance(node.value, dict):
            raise ConfigError("expected a mapping", node.line, name)
        self.items = node.value
        self.name = name
        self.line = node.line
        for key, (_, kline) in self.items.items():
            if key not in allowed:
                raise ConfigError(f"unknown key (allowed: {', '.join(sorted(allowed))})", kline,
                                  f"{name}.{key}" if name else str(key))

    def _path(self, key):
        return f"{self.name}.{key}" if self.name else key

    def has(self, key) -> bool:
        return key in self.items

    def node(self, key) -> Node:
        return self.items[key][0]

    def get(self, key, kind, default=None, required=False, check=None, what=""):
        if key not in self.items:
            if required:
                raise ConfigError("missing required key", self.line, self._path(key))
            return default
        n = self.node(key)
        v = n.value
        if v is None and not required:
            return default
        try:
            if kind is float:
                if isinstance(v, bool) or not isinstance(v, (int, float)):
                    raise TypeError
                v = float(v)
            elif kind is int:
                if isinstance(v, bool) or not isinstance(v, int):
                    raise TypeError
            elif kind is bool:
                if not isinstance(v, bool):
                    raise TypeError
            elif kind is str:
                if not isinstance(v, str):
                    raise TypeError
        except TypeError:
            raise ConfigError(f"expected {kind.__name__}, got {v!r}", n.line, self._path(key)) from None
        if check is not None and not check(v):
            raise ConfigError(f"invalid value {v!r}{' (' + what + ')' if what else ''}", n.line, self._path(key))
        return v

    def get_list(self, key, kind, default=None, required=False, check=None, what=""):
        if key not in self.items:
            if required:
                raise ConfigError("missing required key", self.line, self._path(key))
            return default
        n = self.node(key)
        if not isinstance(n.value, list) or not n.value:
            raise ConfigError("expected a non-empty list", n.line, self._path(key))
        out = []
        for item in n.value:
            v = item.value
            ok = (not isinstance(v, bool)) and (isinstance(v, (int, float)) if kind is float
                                                 else isinstance(v, kind))
            if not ok or (check is not None and not check(v)):
                raise ConfigError(f"invalid list entry {v!r}{' (' + what + ')' if what else ''}",
                                  item.line, self._path(key))
            out.append(float(v) if kind is float else v)
        return out


@dataclass
class ExperimentConfig:
    kind: str
    seed: int
    samples: int
    output_dir: Path
    formats: tuple[str, ...] = ("csv", "json")
    ensemble: P.EnsembleConfig | None = None
    horizons: tuple[float, ...] = ()
    fit: bool = False
    plan: X.SweepPlan | None = None
    coupled: bool = False
    refinement: tuple[int, ...] = (1, 2, 4)
    theory_samples: int = 100_000
    table_H: tuple[float, ...] = (0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9)
    source_text: str = ""
    source_path: str = ""
    echo: dict = field(default_factory=dict)


def _kernel(node: Node, name: str, base_dir: Path) -> K.KernelSpec:
    sec = _Section(node, name, KERNEL_KEYS)
    fam = sec.get("family", str, required=True, check=lambda f: f in (K.FBM, K.LAMPERTI_FBM, K.TABULATED),
                  what="fbm, lamperti_fbm or tabulated")
    try:
        if fam in (K.FBM, K.LAMPERTI_FBM):
            H = sec.get("H", float, required=True, check=lambda h: 0 < h < 1, what="0 < H < 1")
            return K.fbm(H) if fam == K.FBM else K.lamperti_fbm(H)
        if sec.has("file"):
            path = Path(sec.get("file", str))
            return K.load_tabulated(path if path.is_absolute() else base_dir / path)
        corr = sec.get_list("correlations", float, required=True)
        step = sec.get("step", float, required=True, check=lambda s: s > 0, what="step > 0")
        return K.tabulated(corr, step)
    except ConfigError:
        raise
    except (ValueError, OSError) as exc:
        raise ConfigError(str(exc), node.line, name) from None


def _ensemble(node: Node, base_dir: Path, require_n: bool = True) -> P.EnsembleConfig:
    sec = _Section(node, "ensemble", ENSEMBLE_KEYS)
    leader = _kernel(sec.node("leader"), "ensemble.leader", base_dir) if sec.has("leader") else None
    if leader is None:
        raise ConfigError("missing required key", sec.line, "ensemble.leader")
    if sec.has("pursuers") and sec.has("n"):
        raise ConfigError("give either n (pursuers share the leader kernel) or pursuers, not both",
                          sec.node("n").line, "ensemble.n")
    if sec.has("pursuers"):
        pn = sec.node("pursuers")
        if not isinstance(pn.value, list) or not pn.value:
            raise ConfigError("expected a non-empty list", pn.line, "ensemble.pursuers")
        pursuers = []
        for i, item in enumerate(pn.value):
            ps = _Section(item, f"ensemble.pursuers[{i}]", PURSUER_KEYS)
            if not ps.has("kernel"):
                raise ConfigError("missing required key", item.line, f"ensemble.pursuers[{i}].kernel")
            kern = _kernel(ps.node("kernel"), f"ensemble.pursuers[{i}].kernel", base_dir)
            cnt = ps.get("count", int, default=1, check=lambda c: c >= 1, what="count >= 1")
            pursuers.append((kern, cnt))
    else:
        n = sec.get("n", int, default=None if require_n else 2, required=require_n,
                    check=lambda v: v >= 1, what="n >= 1")
        pursuers = [(leader, n)]
    kw = dict(
        T=sec.get("T", float, required=True, check=lambda t: t > 0, what="T > 0"),
        formulation=sec.get("formulation", str, default=P.STATIONARY_0T, check=lambda f: f in P.FORMULATIONS,
                            what=", ".join(P.FORMULATIONS)),
        level=sec.get("level", float),
        density=sec.get("density", int, default=64, check=lambda d: d >= 1, what="density >= 1"),
        grid=sec.get("grid", str, check=lambda g: g in (P.UNIFORM, P.LOG), what="uniform or log"),
        t_min=sec.get("t_min", float, default=0.01, check=lambda t: t > 0, what="t_min > 0"),
        continuity=sec.get("continuity", str, default=P.NO_CORRECTION,
                           check=lambda c: c in (P.NO_CORRECTION, P.BROWNIAN_BRIDGE),
                           what="none or brownian_bridge"),
        chunk_rows=sec.get("chunk_rows", int, check=lambda c: c >= 1, what="chunk_rows >= 1"),
    )
    try:
        return P.EnsembleConfig(leader, tuple(pursuers), **kw)
    except ValueError as exc:
        raise ConfigError(str(exc), node.line, "ensemble") from None


def load_config(path, output_dir=None) -> ExperimentConfig:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config: {exc}") from None
    return parse_config(text, base_dir=path.parent, source_path=str(path), output_dir=output_dir)


def parse_config(text: str, base_dir: Path = Path("."), source_path: str = "",
                 output_dir=None) -> ExperimentConfig:
    root = parse_text(text)
    top = _Section(root, "", TOP_KEYS)
    kind = top.get("experiment", str, required=True, check=lambda k: k in KINDS, what=", ".join(KINDS))
    seed = top.get("seed", int, default=0, check=lambda s: 0 <= s < 2**63, what="0 <= seed < 2^63")
    samples = top.get("samples", int, default=100_000, check=lambda s: s >= 1, what="samples >= 1")
    out = output_dir or top.get("output_dir", str, default="results")
    formats = top.get_list("formats", str, default=["csv", "json"], check=lambda f: f in FORMATS,
                           what="csv, json or txt")
    cfg = ExperimentConfig(kind, seed, samples, Path(out), tuple(formats), source_text=text,
                           source_path=source_path)

    needs_ensemble = kind in (SURVIVAL, CAPTURE_CDF, SWEEP, COMPARE)
    if needs_ensemble:
        if not top.has("ensemble"):
            raise ConfigError("missing required key", 1, "ensemble")
        cfg.ensemble = _ensemble(top.node("ensemble"), base_dir, require_n=kind != SWEEP)
    for key, allowed_kind in (("capture", CAPTURE_CDF), ("sweep", SWEEP), ("theory", THEORY_REPORT),
                              ("kernel_table", KERNEL_TABLE), ("ensemble", None), ("refinement", SURVIVAL)):
        if top.has(key) and allowed_kind is not None and kind != allowed_kind:
            raise ConfigError(f"section does not apply to experiment {kind!r}", top.items[key][1], key)
    if top.has("ensemble") and not needs_ensemble:
        raise ConfigError(f"section does not apply to experiment {kind!r}", top.items["ensemble"][1], "ensemble")

    if kind == SURVIVAL and top.has("refinement"):
        cfg.refinement = tuple(top.get_list("refinement", int, check=lambda s: s >= 1, what="strides >= 1"))
    if kind == CAPTURE_CDF:
        sec = _Section(top.node("capture"), "capture", CAPTURE_KEYS) if top.has("capture") else None
        cfg.horizons = tuple(sec.get_list("horizons", float, default=[cfg.ensemble.T], check=lambda t: t > 0)
                             if sec else [cfg.ensemble.T])
        cfg.fit = bool(sec.get("fit", bool, default=False)) if sec else False
        grid = cfg.ensemble.grid_spec()
        for T in cfg.horizons:
            try:
                grid.index_of(T)
            except ValueError:
                raise ConfigError(f"horizon {T:g} is not a grid time", sec.node("horizons").line if sec else 1,
                                  "capture.horizons") from None
    if kind == COMPARE and cfg.ensemble.formulation == P.STATIONARY_0T:
        raise ConfigError("compare needs a self-similar formulation", top.node("ensemble").line,
                          "ensemble.formulation")
    if kind == SWEEP:
        if not top.has("sweep"):
            raise ConfigError("missing required key", 1, "sweep")
        sec = _Section(top.node("sweep"), "sweep", SWEEP_KEYS)
        Ts = sec.get_list("T", float, required=True, check=lambda t: t > 0)
        ns = sec.get_list("n", int, required=True, check=lambda n: n >= 2, what="n >= 2")
        c = sec.get("c", float, default=1.1)
        C = sec.get("C", float, default=5.0)
        cfg.coupled = sec.get("coupled", bool, default=False)
        drop = sec.get("drop_inadmissible", bool, default=False)
        if len(cfg.ensemble.pursuers) != 1:
            raise ConfigError("sweeps need a single pursuer kernel", top.node("ensemble").line, "ensemble.pursuers")
        try:
            plan = X.SweepPlan.product(Ts, ns, cfg.ensemble.formulation, c, C)
            if plan.dropped and not drop:
                T, n = plan.dropped[0]
                raise X.DomainError(
                    f"cell (T={T:g}, n={n}) violates the {X.formulation_family(cfg.ensemble.formulation)} "
                    f"admissible domain with c={c:g}, C={C:g}; set drop_inadmissible: true to skip such cells")
        except X.DomainError as exc:
            raise ConfigError(str(exc), sec.line, "sweep") from None
        cfg.plan = plan
    if kind == THEORY_REPORT and top.has("theory"):
        sec = _Section(top.node("theory"), "theory", THEORY_KEYS)
        cfg.theory_samples = sec.get("samples", int, default=100_000, check=lambda s: s >= 1000,
                                     what="samples >= 1000")
    if kind == KERNEL_TABLE and top.has("kernel_table"):
        sec = _Section(top.node("kernel_table"), "kernel_table", TABLE_KEYS)
        cfg.table_H = tuple(sec.get_list("H", float, check=lambda h: 0 < h < 1, what="0 < H < 1"))
    cfg.echo = yaml.safe_load(text)
    return cfg
