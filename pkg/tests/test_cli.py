import csv
import json
import subprocess
import sys

import pytest

from finslerkit.cli import ConfigError, dumps, main, run
from finslerkit.suite import verify_suite
from finslerkit.metrics import make_model
from finslerkit.tolerances import DEFAULTS, Tolerances, parse_override


def _write(tmp_path, cfg):
    path = tmp_path / "config.json"
    path.write_text(json.dumps(cfg))
    return str(path)


def test_verify_euclid_all_zero(tmp_path):
    cfg = {"subcommand": "verify", "model": {"model": "euclid", "n": 2}, "seed": 7}
    assert main(["run", _write(tmp_path, cfg), "-o", str(tmp_path)]) == 0
    rows = list(csv.DictReader(open(tmp_path / "verify.csv")))
    assert len(rows) == 50
    assert all(float(r[c]) == 0.0 for r in rows for c in ("K", "T", "Tdot", "Kalpha"))
    verdict = json.loads((tmp_path / "verify.verdict.json").read_text())
    assert verdict["passed"] and verdict["seed"] == 7
    assert all("tolerance" in c for c in verdict["checks"].values())


def test_randers_out_of_range_is_usage_error(tmp_path, capsys):
    cfg = {"subcommand": "verify", "model": {"model": "randers", "eps": 1.5}}
    assert main(["run", _write(tmp_path, cfg), "-o", str(tmp_path)]) == 2
    assert "|eps| < 1" in capsys.readouterr().err


def test_report_columns_and_error_records(tmp_path):
    cfg = {"model": {"model": "funk"},
           "flags": [{"x": [0.1, 0.2], "y": [1, 0], "v": [0, 1]},
                     {"x": [0.1, 0.2], "y": [1, 0], "v": [2, 0]},
                     {"x": [1.5, 0.0], "y": [1, 0], "v": [0, 1]}]}
    status = main(["report", _write(tmp_path, cfg), "-o", str(tmp_path)])
    assert status == 1
    with open(tmp_path / "report.csv") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        rows = list(reader)
    assert header == ["model", "x", "y", "v", "alpha", "F", "K", "T", "Tdot", "Kalpha"]
    assert float(rows[0][6]) == pytest.approx(-0.25, abs=1e-9)
    errors = json.loads((tmp_path / "report.verdict.json").read_text())["errors"]
    assert [e["error"] for e in errors] == ["DegenerateError", "ChartError"]


@pytest.mark.parametrize("cfg, message", [
    ({"subcommand": "verify", "model": "euclid", "bogus": 1}, "unknown key"),
    ({"subcommand": "nope", "model": "euclid"}, "unknown subcommand"),
    ({"subcommand": "verify"}, "model"),
    ({"subcommand": "verify", "model": "euclid", "tolerances": {"nope": 1}}, "unknown tolerance"),
    ({"subcommand": "geodesic", "model": "euclid", "x0": [0, 0]}, "y0"),
    ({"subcommand": "convexity", "model": "euclid", "p": [0, 0], "r_grid": [0],
      "plan": {"grid": 3}}, "plan"),
])
def test_config_errors(tmp_path, cfg, message):
    with pytest.raises((ConfigError, ValueError), match=message):
        run(cfg, output_dir=tmp_path)
    assert main(["run", _write(tmp_path, cfg), "-o", str(tmp_path)]) == 2


def test_malformed_json(tmp_path, capsys):
    bad = tmp_path / "bad.json"
    bad.write_text("{not json")
    assert main(["run", str(bad)]) == 2
    assert "malformed" in capsys.readouterr().err


def test_geodesic_and_distance(tmp_path):
    cfg = {"model": "funk", "x0": [0, 0], "y0": [1, 0], "T": 2.0, "samples": 5}
    assert main(["geodesic", _write(tmp_path, cfg), "-o", str(tmp_path)]) == 0
    rows = list(csv.DictReader(open(tmp_path / "geodesic.csv")))
    assert list(rows[0]) == ["t", "x", "y"]
    assert float(rows[-1]["x"].split()[0]) == pytest.approx(1 - 2.718281828459045 ** -2.0, abs=1e-9)
    cfg = {"model": "funk", "p": [0, 0], "q": [0.5, 0]}
    assert main(["distance", _write(tmp_path, cfg), "-o", str(tmp_path), "-f", "json"]) == 0
    verdict = json.loads((tmp_path / "distance.verdict.json").read_text())
    assert verdict["d_pq"]["d"] == pytest.approx(0.6931471805599453, abs=1e-8)
    assert verdict["d_qp"]["d"] == pytest.approx(0.4054651081081644, abs=1e-8)


def test_geodesic_chart_exit_is_recorded(tmp_path):
    cfg = {"model": "euclid", "x0": [9.0, 0.0], "y0": [1.0, 0.0], "T": 5.0}
    assert main(["geodesic", _write(tmp_path, cfg), "-o", str(tmp_path)]) == 0
    verdict = json.loads((tmp_path / "geodesic.verdict.json").read_text())
    assert verdict["truncated"] and verdict["chart_exit"]["error"] == "ChartError"


def test_busemann_subcommand(tmp_path):
    cfg = {"model": "euclid", "p": [0, 0], "probes": [[0.5, 0], [0, 1]], "horizons": [1, 2],
           "count": 64}
    assert main(["busemann", _write(tmp_path, cfg), "-o", str(tmp_path)]) == 0
    rows = list(csv.DictReader(open(tmp_path / "busemann.csv")))
    assert list(rows[0]) == ["probe", "x", "t", "b"]
    assert len(rows) == 4
    verdict = json.loads((tmp_path / "busemann.verdict.json").read_text())
    assert verdict["passed"] and set(verdict["checks"]) >= {"bounds", "monotone", "lipschitz"}


def test_convexity_refusal(tmp_path):
    cfg = {"model": "euclid", "p": [0, 0], "r_grid": [0.0],
           "plan": {"base_points": 8, "directions": 16, "flagpoles": 4, "candidates": 24,
                    "probes": 4, "horizons": [1, 2], "fill": 0.4}}
    assert main(["convexity", _write(tmp_path, cfg), "-o", str(tmp_path)]) == 1
    verdict = json.loads((tmp_path / "convexity.verdict.json").read_text())
    assert verdict["verdict"] == "refused" and verdict["witness"]["quantity"] == "P"


def test_output_dir_from_environment(tmp_path, monkeypatch):
    monkeypatch.setenv("FINSLERKIT_OUTPUT_DIR", str(tmp_path / "env"))
    cfg = {"subcommand": "verify", "model": "euclid", "samples": 5, "geodesics": 1}
    assert run(cfg) == 0
    assert (tmp_path / "env" / "verify.verdict.json").exists()


def test_tolerance_override_changes_verdict(tmp_path):
    cfg = {"subcommand": "verify", "model": "funk", "samples": 10, "geodesics": 1}
    assert main(["run", _write(tmp_path, cfg), "-o", str(tmp_path)]) == 0
    assert main(["run", _write(tmp_path, cfg), "-o", str(tmp_path), "-t", "funk_K=0"]) == 1
    verdict = json.loads((tmp_path / "verify.verdict.json").read_text())
    assert verdict["checks"]["funk_K"]["tolerance"] == 0.0
    assert main(["run", _write(tmp_path, cfg), "-t", "funk_K"]) == 2


def test_stdin_config_and_module_entry(tmp_path):
    cfg = json.dumps({"subcommand": "verify", "model": "euclid", "samples": 3, "geodesics": 1})
    proc = subprocess.run([sys.executable, "-m", "finslerkit", "run", "-", "-o", str(tmp_path)],
                          input=cfg, capture_output=True, text=True)
    assert proc.returncode == 0, proc.stderr
    assert (tmp_path / "verify.csv").exists()


def test_json_serialization_is_canonical():
    text = dumps({"b": 1.0, "a": [float("nan"), 0.1], "c": {"z": True}})
    assert text.index('"a"') < text.index('"b"')
    assert "null" in text and "0.1" in text


def test_tolerances():
    tol = Tolerances({"funk_K": 1e-3})
    assert tol["funk_K"] == 1e-3 and tol["flat_zero"] == DEFAULTS["flat_zero"]
    assert tol.updated(flat_zero=0.5)["flat_zero"] == 0.5
    assert parse_override("hessian=0.01") == ("hessian", 0.01)
    with pytest.raises(ValueError):
        Tolerances({"nope": 1})
    with pytest.raises(ValueError):
        Tolerances({"hessian": -1})
    with pytest.raises(ValueError):
        parse_override("hessian=abc")


def test_verify_suite_reference_models():
    for spec, kind in [("funk", "funk"), ({"model": "riemannian", "matrix": "poincare"}, "riemannian")]:
        rows, verdict = verify_suite(make_model(spec), seed=3, samples=10, geodesics=1)
        assert verdict["reference"] == kind
        assert verdict["passed"], verdict["checks"]
        assert len(rows) == 10
