import csv
import json
import math
from pathlib import Path

import pytest
from scipy.special import erf

from leaderlab import cli
from leaderlab import config as C
from leaderlab import exponents as X
from leaderlab import kernels as K
from leaderlab import pursuit as P

GOLDEN = json.loads((Path(__file__).parent / "golden" / "schemas.json").read_text())
CONFIGS = Path(__file__).resolve().parents[1] / "configs"

SMALL = {
    "survival": """experiment: survival
seed: 1
samples: 500
ensemble: {leader: {family: lamperti_fbm, H: 0.5}, n: 2, T: 1, density: 8}
""",
    "capture_cdf": """experiment: capture_cdf
seed: 1
samples: 500
ensemble: {leader: {family: fbm, H: 0.5}, n: 1, T: 16, formulation: self_similar_0T, grid: log, density: 8}
capture: {horizons: [1, 4, 16], fit: true}
""",
    "sweep": """experiment: sweep
seed: 1
samples: 500
ensemble: {leader: {family: lamperti_fbm, H: 0.5}, T: 2, density: 8}
sweep: {T: [2, 3], n: [4, 8]}
""",
    "compare": """experiment: compare
seed: 1
samples: 500
ensemble: {leader: {family: fbm, H: 0.5}, n: 2, T: 8, formulation: self_similar_1T, density: 8}
""",
    "theory_report": """experiment: theory_report
seed: 1
formats: [csv, json, txt]
theory: {samples: 2000}
""",
    "kernel_table": """experiment: kernel_table
kernel_table: {H: [0.5]}
""",
}


def run_text(text, out, workers=1):
    cfg = C.parse_config(text, output_dir=str(out))
    return cli.execute(cfg, workers=workers)


def read_csv(path):
    with open(path) as fh:
        return list(csv.DictReader(fh))


def write(tmp_path, name, text):
    p = tmp_path / name
    p.write_text(text)
    return p


@pytest.mark.parametrize("kind", sorted(SMALL))
def test_golden_schemas(kind, tmp_path):
    code, man = run_text(SMALL[kind], tmp_path / kind)
    assert code == cli.EXIT_OK and man["status"] == "ok"
    for name, header in GOLDEN[kind]["csv"].items():
        assert (tmp_path / kind / name).read_text().splitlines()[0].split(",") == header
    for name, keys in GOLDEN[kind]["json"].items():
        assert sorted(json.loads((tmp_path / kind / name).read_text())) == keys
    saved = json.loads((tmp_path / kind / cli.MANIFEST).read_text())
    assert sorted(saved) == GOLDEN["manifest"]
    assert set(saved["files"]) == set(GOLDEN[kind]["csv"]) | set(GOLDEN[kind]["json"]) | (
        {"theory.txt"} if kind == "theory_report" else set())


def test_brownian_survival_inside_closed_form_ci(tmp_path):
    text = """experiment: survival
seed: 2026
samples: 40000
ensemble:
  leader: {family: fbm, H: 0.5}
  n: 1
  T: 4
  formulation: self_similar_0T
  grid: log
  density: 16
  continuity: brownian_bridge
"""
    code, _ = run_text(text, tmp_path)
    row = read_csv(tmp_path / "results.csv")[0]
    p = erf(1 / (2 * math.sqrt(4.0)))
    assert code == 0 and float(row["ci_low"]) <= p <= float(row["ci_high"])


def test_sweep_domain_violation_names_pair(tmp_path):
    text = SMALL["sweep"].replace("T: [2, 3], n: [4, 8]", "T: [8], n: [8, 16]")
    p = write(tmp_path, "bad.yaml", text)
    with pytest.raises(C.ConfigError, match=r"T=8, n=8") as info:
        C.load_config(p)
    assert info.value.line == 5
    assert cli.main(["validate", str(p)]) == cli.EXIT_VALIDATION
    ok = write(tmp_path, "ok.yaml", text.replace("n: [8, 16]}", "n: [8, 16], drop_inadmissible: true}"))
    assert C.load_config(ok).plan.dropped == ((8.0, 8),)


@pytest.mark.parametrize("text, line, field", [
    ("experiment: survival\nsamples: 10\nbogus: 1\n", 3, "bogus"),
    ("experiment: survival\nensemble:\n  leader: {family: lamperti_fbm, H: 0.5}\n  n: 0\n  T: 1\n", 4, "ensemble.n"),
    ("experiment: survival\nensemble:\n  leader: {family: lamperti_fbm, H: 1.5}\n  n: 2\n  T: 1\n", 3, "ensemble.leader.H"),
    ("experiment: nope\n", 1, "experiment"),
    ("experiment: survival\nseed: -4\n", 2, "seed"),
])
def test_validation_errors_name_field_and_line(text, line, field):
    with pytest.raises(C.ConfigError) as info:
        C.parse_config(text)
    assert info.value.line == line and info.value.field_name == field


def test_capture_horizon_off_grid_rejected():
    text = SMALL["capture_cdf"].replace("[1, 4, 16]", "[1, 5, 16]")
    with pytest.raises(C.ConfigError, match="not a grid time"):
        C.parse_config(text)


def test_invalid_yaml_reports_line(tmp_path):
    p = write(tmp_path, "x.yaml", "experiment: survival\nensemble: [\n")
    with pytest.raises(C.ConfigError) as info:
        C.load_config(p)
    assert info.value.line is not None


def test_theory_report_lists_every_check(tmp_path):
    run_text(SMALL["theory_report"], tmp_path)
    text = (tmp_path / "theory.txt").read_text()
    for name in ("lemma4_scaling", "lemma4_nodes", "folding_mass", "theta_sigma_sq", "folding_white_flat",
                 "a_theta_monotone", "lemma5_bound", "mills_ratio", "concentration",
                 "correlation_inequality", "small_ball_scaling"):
        assert f"PASS {name}" in text or f"FAIL {name}" in text


def test_emit_plot_data():
    plan = X.SweepPlan(((2.0, 4),))
    base = P.EnsembleConfig.homogeneous(K.lamperti_fbm(0.5), 4, 2.0, density=8)
    table = X.sweep(plan, base, seed=1, samples=1000)
    rows = cli.emit_plot_data(table)
    assert [r["series"] for r in rows] == ["estimate", "reference"]
    assert float(rows[1]["ordinate"]) == pytest.approx(X.prediction(K.lamperti_fbm(0.5)))
    assert rows[0]["ci_low"] and rows[0]["ci_high"]
    assert all(tuple(r) == cli.PLOT_FIELDS or set(r) == set(cli.PLOT_FIELDS) for r in rows)
    table.rows = []
    with pytest.raises(ValueError):
        cli.emit_plot_data(table)


def test_manifest_rerun_byte_identical(tmp_path):
    cfg_path = write(tmp_path, "s.yaml", SMALL["survival"])
    assert cli.main(["run", str(cfg_path), "--out", str(tmp_path / "a")]) == 0
    assert cli.main(["run", str(tmp_path / "a" / cli.MANIFEST), "--out", str(tmp_path / "b")]) == 0
    for f in ("results.csv", "refinement.csv"):
        assert (tmp_path / "a" / f).read_bytes() == (tmp_path / "b" / f).read_bytes()


def test_worker_counts_byte_identical(tmp_path):
    for kind in ("survival", "sweep", "compare"):
        text = SMALL[kind].replace("samples: 500", "samples: 3000")
        text = text.replace("density: 8}", "density: 8, chunk_rows: 256}")
        _, m1 = run_text(text, tmp_path / f"{kind}1", workers=1)
        _, m2 = run_text(text, tmp_path / f"{kind}2", workers=3)
        assert m1["files"] == m2["files"]


def test_total_failure_exit_code(tmp_path):
    text = SMALL["sweep"].replace("samples: 500", "samples: 1")
    cfg = C.parse_config(text, output_dir=str(tmp_path))
    cfg.samples = 0  # bypasses validation to force every cell to fail
    code, man = cli.execute(cfg, workers=1)
    assert code == cli.EXIT_COMPUTE and man["status"] == "failed"


def test_report_subcommand(tmp_path, capsys):
    run_text(SMALL["kernel_table"], tmp_path)
    assert cli.main(["report", str(tmp_path)]) == 0
    assert "kernels.csv" in capsys.readouterr().out
    assert cli.main(["report", str(tmp_path / "missing")]) == cli.EXIT_VALIDATION


@pytest.mark.parametrize("path", sorted(CONFIGS.glob("*.yaml")), ids=lambda p: p.stem)
def test_shipped_configs_validate(path):
    assert cli.main(["validate", str(path)]) == cli.EXIT_OK
