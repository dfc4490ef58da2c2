"""Command-line runner: ``leaderlab run|validate|report``."""

from __future__ import annotations

import argparse
import csv
import hashlib
import io
import json
import math
import sys
import time
from dataclasses import replace
from pathlib import Path

from leaderlab import __version__
from leaderlab import config as C
from leaderlab import exponents as X
from leaderlab import kernels as K
from leaderlab import pursuit as P
from leaderlab import theory as TH

EXIT_OK, EXIT_VALIDATION, EXIT_COMPUTE = 0, 1, 2
MANIFEST = "manifest.json"
MANIFEST_SCHEMA = "leaderlab.manifest/1"

REFINEMENT_FIELDS = P.CSV_FIELDS + ("stride",)
CDF_FIELDS = ("time", "cdf", "survival")
COMPARE_FIELDS = ("event",) + P.CSV_FIELDS
THEORY_FIELDS = ("check", "passed", "quantity", "value")
KERNEL_FIELDS = ("H", "d_closed_form", "d_quadrature", "d_spectral", "rel_err_quadrature",
                 "rel_err_spectral", "prediction")
PLOT_FIELDS = ("series", "formulation", "kernel", "T", "n", "abscissa_kind", "abscissa",
               "ordinate", "ci_low", "ci_high")

f17 = P.format_float


class ComputeError(RuntimeError):
    pass


def csv_text(fields, rows) -> str:
    buf = io.StringIO()
    w = csv.DictWriter(buf, fieldnames=list(fields), lineterminator="\n")
    w.writeheader()
    for r in rows:
        w.writerow(r)
    return buf.getvalue()


def emit_plot_data(table: X.SweepTable, abscissa: str = "ln_n") -> list[dict]:
    """Long-format rows: one 'estimate' and one 'reference' row per cell."""
    if not table.rows:
        raise ValueError("empty sweep table")
    if abscissa not in ("ln_n", "ln_T"):
        raise ValueError("abscissa must be ln_n or ln_T")
    out = []
    for r in table.rows:
        base = {"formulation": table.plan.formulation, "kernel": table.config.leader_tag,
                "T": f17(r.T), "n": str(r.n), "abscissa_kind": abscissa,
                "abscissa": f17(math.log(r.n) if abscissa == "ln_n" else math.log(r.T))}
        rat = r.ratio
        out.append({**base, "series": "estimate",
                    "ordinate": "" if rat is None or rat.one_sided else f17(rat.value),
                    "ci_low": "" if rat is None else f17(rat.ci_low),
                    "ci_high": "" if rat is None else f17(rat.ci_high)})
        out.append({**base, "series": "reference", "ordinate": f17(table.prediction),
                    "ci_low": "", "ci_high": ""})
    return out


def _row_with(cfg: P.EnsembleConfig, seed: int, est: P.MCEstimate, **extra) -> dict:
    row = P.csv_row(cfg, seed, est)
    row.update(extra)
    return row


def _run_survival(cfg: C.ExperimentConfig, workers) -> tuple[dict, list]:
    ens = cfg.ensemble
    est = P.estimate_survival(ens, cfg.seed, cfg.samples, workers=workers)
    files = {"results.csv": csv_text(P.CSV_FIELDS, [P.csv_row(ens, cfg.seed, est)])}
    grid = ens.grid_spec()
    last, start = grid.points - 1, ens.start_index(grid)
    strides = [s for s in sorted(set(cfg.refinement) | {1}) if last % s == 0 and start % s == 0]
    skipped = sorted(set(cfg.refinement) - set(strides))
    rows = []
    for r in P.refinement_study(ens, cfg.seed, cfg.samples, strides, workers=workers):
        row = _row_with(ens, cfg.seed, r.estimate, stride=str(r.stride))
        row["density"] = f17(r.density)
        rows.append(row)
    files["refinement.csv"] = csv_text(REFINEMENT_FIELDS, rows)
    notes = [f"refinement strides {skipped} do not divide the grid and were skipped"] if skipped else []
    return files, notes, []


def _run_capture(cfg: C.ExperimentConfig, workers) -> tuple[dict, list]:
    ens = cfg.ensemble
    cdf = P.capture_time_cdf(ens, cfg.seed, cfg.samples, workers=workers)
    F = cdf.cdf
    files = {"cdf.csv": csv_text(CDF_FIELDS, [{"time": f17(t), "cdf": f17(v), "survival": f17(1.0 - v)}
                                              for t, v in zip(cdf.times, F)])}
    pts = [(T, cdf.survival(T)) for T in cfg.horizons]
    files["survival.csv"] = csv_text(P.CSV_FIELDS, [P.csv_row(replace(ens, T=T), cfg.seed, e) for T, e in pts])
    notes = []
    if cfg.fit:
        try:
            pred = X.prediction(ens.leader) * math.log(ens.n) if ens.n >= 2 else math.nan
            fit = X.fit_gamma_n(pts, ens.n, pred)
            files["fit.json"] = json.dumps(fit.to_dict(), indent=2, sort_keys=True) + "\n"
        except ValueError as exc:
            notes.append(f"fit skipped: {exc}")
    return files, notes, []


def _run_sweep(cfg: C.ExperimentConfig, workers) -> tuple[dict, list]:
    table = X.sweep(cfg.plan, cfg.ensemble, cfg.seed, cfg.samples, coupled=cfg.coupled, workers=workers)
    failed = [r for r in table.rows if r.error]
    if len(failed) == len(table.rows):
        raise ComputeError(f"every sweep cell failed; first error: {failed[0].error}")
    files = {"sweep.csv": csv_text(X.SWEEP_FIELDS, X.sweep_csv_rows(table)),
             "plot.csv": csv_text(PLOT_FIELDS, emit_plot_data(table)),
             "sweep.json": json.dumps(X.sweep_summary(table), indent=2, sort_keys=True) + "\n"}
    notes = [f"cell (T={T:g}, n={n}) outside the admissible domain, dropped" for T, n in cfg.plan.dropped]
    errors = [f"cell (T={r.T:g}, n={r.n}) failed: {r.error}" for r in failed]
    return files, notes, errors


def _run_compare(cfg: C.ExperimentConfig, workers) -> tuple[dict, list]:
    ens = cfg.ensemble
    cmp = P.compare_formulations(ens, cfg.seed, cfg.samples, workers=workers)
    events = [("interval_1T_level0", replace(ens, formulation=P.SELF_SIMILAR_1T, level=0.0), cmp.interval_1T),
              ("interval_0T_level1", replace(ens, formulation=P.SELF_SIMILAR_0T, level=1.0), cmp.interval_0T),
              ("interval_0T_level0", replace(ens, formulation=P.SELF_SIMILAR_0T, level=0.0), cmp.baseline_0T)]
    rows = [_row_with(c, cfg.seed, e, event=name) for name, c, e in events]
    a, b = cmp.interval_1T, cmp.interval_0T
    summary = {
        "schema": "leaderlab.compare/1",
        "log_ratio": cmp.log_ratio if a.survivors and b.survivors and b.p_hat < 1 else None,
        "log_ratio_bounds": ([math.log(a.ci_low) / math.log(b.ci_high), math.log(a.ci_high) / math.log(b.ci_low)]
                             if a.ci_low > 0 and b.ci_high < 1 else None),
        "violations": cmp.violations,
        "patterns": {"".join("1" if x else "0" for x in k): v for k, v in sorted(cmp.patterns.items())},
        "grid_points": cmp.grid.points, "grid_start": cmp.grid.t_start,
    }
    return {"compare.csv": csv_text(COMPARE_FIELDS, rows),
            "compare.json": json.dumps(summary, indent=2, sort_keys=True) + "\n"}, [], []


def _flat(v) -> str:
    if isinstance(v, float):
        return f17(v)
    if isinstance(v, (list, tuple)):
        return json.dumps([float(x) for x in v])
    return str(v)


def _run_theory(cfg: C.ExperimentConfig, workers) -> tuple[dict, list]:
    checks = TH.theory_report(cfg.seed, cfg.theory_samples)
    rows, lines = [], []
    for c in checks:
        lines.append(f"{'PASS' if c.passed else 'FAIL'} {c.name}" + (f"  ({c.note})" if c.note else ""))
        for q, v in c.measured.items():
            rows.append({"check": c.name, "passed": "true" if c.passed else "false", "quantity": q, "value": _flat(v)})
            lines.append(f"    {q} = {_flat(v)}")
    notes = [f"theory check failed: {c.name}" for c in checks if not c.passed]
    return {"theory.csv": csv_text(THEORY_FIELDS, rows), "theory.txt": "\n".join(lines) + "\n"}, notes, []


def _run_kernel_table(cfg: C.ExperimentConfig, workers) -> tuple[dict, list]:
    rows = []
    for H in cfg.table_H:
        k = K.lamperti_fbm(H)
        dc, dq, ds = K.d_closed_form(H).d, K.d_quadrature(k).d, K.d_spectral(k).d
        rows.append({"H": f17(H), "d_closed_form": f17(dc), "d_quadrature": f17(dq), "d_spectral": f17(ds),
                     "rel_err_quadrature": f17(abs(dq - dc) / dc), "rel_err_spectral": f17(abs(ds - dc) / dc),
                     "prediction": f17(1.0 / dc)})
    return {"kernels.csv": csv_text(KERNEL_FIELDS, rows)}, [], []


RUNNERS = {C.SURVIVAL: _run_survival, C.CAPTURE_CDF: _run_capture, C.SWEEP: _run_sweep,
           C.COMPARE: _run_compare, C.THEORY_REPORT: _run_theory, C.KERNEL_TABLE: _run_kernel_table}
FORMAT_OF = {".csv": "csv", ".json": "json", ".txt": "txt"}


def load_any(path, output_dir=None) -> C.ExperimentConfig:
    """Config file, or a run manifest (re-executes the config it echoes)."""
    p = Path(path)
    if p.suffix == ".json":
        try:
            man = json.loads(p.read_text())
        except (OSError, ValueError) as exc:
            raise C.ConfigError(f"cannot read manifest: {exc}") from None
        if man.get("schema") != MANIFEST_SCHEMA or "config_text" not in man:
            raise C.ConfigError("not a run manifest")
        base = Path(man.get("config_dir") or p.parent)
        out = output_dir or man.get("output_dir")
        return C.parse_config(man["config_text"], base_dir=base, source_path=str(p), output_dir=out)
    return C.load_config(p, output_dir=output_dir)


def execute(cfg: C.ExperimentConfig, workers: int | None = None) -> tuple[int, dict]:
    """Run one experiment and write its artifacts; returns (exit code, manifest)."""
    workers = P.workers_from_env() if workers is None else workers
    t0 = time.perf_counter()
    status, notes, errors, files = "ok", [], [], {}
    try:
        files, notes, errors = RUNNERS[cfg.kind](cfg, workers)
        code = EXIT_OK
    except Exception as exc:  # reported in the manifest and via the exit code
        status, code = "failed", EXIT_COMPUTE
        errors = [f"{type(exc).__name__}: {exc}"]
    out = cfg.output_dir
    out.mkdir(parents=True, exist_ok=True)
    written = {}
    for name, body in files.items():
        if FORMAT_OF[Path(name).suffix] not in cfg.formats:
            continue
        (out / name).write_text(body)
        written[name] = hashlib.sha256(body.encode()).hexdigest()
    if status == "ok" and errors:
        status = "partial"
    manifest = {
        "schema": MANIFEST_SCHEMA, "version": __version__, "experiment": cfg.kind, "seed": cfg.seed,
        "samples": cfg.samples, "workers": workers, "wall_time_s": round(time.perf_counter() - t0, 3),
        "status": status, "notes": notes, "errors": errors, "files": written, "config": cfg.echo, "config_text": cfg.source_text,
        "config_path": cfg.source_path,
        "config_dir": str(Path(cfg.source_path).resolve().parent) if cfg.source_path else "",
        "output_dir": str(out),
    }
    (out / MANIFEST).write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    return code, manifest


def _report(directory: Path) -> int:
    man_path = directory / MANIFEST
    if not man_path.exists():
        print(f"error: no {MANIFEST} in {directory}", file=sys.stderr)
        return EXIT_VALIDATION
    man = json.loads(man_path.read_text())
    print(f"experiment {man['experiment']}  seed {man['seed']}  samples {man['samples']}  "
          f"status {man['status']}  wall {man['wall_time_s']} s  version {man['version']}")
    for n in man.get("errors", []):
        print(f"  error: {n}")
    for n in man.get("notes", []):
        print(f"  note: {n}")
    for name in sorted(man.get("files", {})):
        path = directory / name
        if name.endswith(".txt"):
            print(f"--- {name}")
            print(path.read_text().rstrip())
        elif name.endswith(".csv"):
            with path.open() as fh:
                rows = list(csv.DictReader(fh))
            print(f"--- {name} ({len(rows)} rows)")
            for r in rows[:12]:
                keep = {k: v for k, v in r.items() if k in ("event", "time", "cdf", "T", "n", "p_hat", "ci_low", "ci_high", "stride",
                                                           "leadership_ratio", "prediction", "check", "passed",
                                                           "quantity", "value", "H", "d_closed_form")}
                print("  " + "  ".join(f"{k}={v}" for k, v in keep.items()))
    return EXIT_OK


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(prog="leaderlab", description="Leader survival experiments.")
    sub = ap.add_subparsers(dest="cmd", required=True)
    r = sub.add_parser("run", help="run an experiment config (or re-run a manifest)")
    r.add_argument("config")
    r.add_argument("--out", help="override output_dir")
    v = sub.add_parser("validate", help="validate a config without computing")
    v.add_argument("config")
    rep = sub.add_parser("report", help="summarize a finished run directory")
    rep.add_argument("directory")
    args = ap.parse_args(argv)

    if args.cmd == "report":
        return _report(Path(args.directory))
    try:
        cfg = load_any(args.config, getattr(args, "out", None))
    except C.ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    if args.cmd == "validate":
        print(f"ok: {cfg.kind} config is valid")
        return EXIT_OK
    code, man = execute(cfg)
    print(f"leaderlab: {cfg.kind} {man['status']} in {man['wall_time_s']} s -> {cfg.output_dir}", file=sys.stderr)
    for n in man["errors"] + man["notes"]:
        print(f"  {n}", file=sys.stderr)
    return code


if __name__ == "__main__":
    sys.exit(main())
