import csv
import json
import math

import numpy as np
import pytest

from oscdecay import reporting
from oscdecay.cli import main, run
from oscdecay.experiments import ConfigError, PRESETS, extended_grid, resolve


def read_json(path):
    with open(path, encoding="utf-8") as fh:
        return json.load(fh)


def read_csv(path):
    with open(path, newline="", encoding="utf-8") as fh:
        return list(csv.reader(fh))


def test_sweep_cubic_example(tmp_path):
    out = tmp_path / "x3"
    assert main(["sweep", "--phase", "cubic1d", "--lambda", "1e2:1e6:25", "--out", str(out),
                 "--plot"]) == 0
    summary = read_json(out / "summary.json")
    assert summary["fitted_exponent"] == pytest.approx(-1 / 3, abs=0.03)
    rows = read_csv(out / "sweep.csv")
    assert rows[0] == ["lambda", "xi1", "re", "im", "abs"]
    assert len(rows) == 1 + 25 * 13
    assert b"\r\n" in (out / "sweep.csv").read_bytes()
    assert (out / "sweep.svg").read_text().lstrip().startswith("<?xml")
    man = read_json(out / "manifest.json")
    assert man["exit_status"] == 0 and man["config"]["lambda"]["points"] == 25
    assert "sweep.svg" in man["outputs"]


def test_identical_config_gives_identical_bytes_and_manifest_roundtrip(tmp_path):
    argv = ["sweep", "--phase", "mixed2d", "--method", "factored", "--lambda", "1e2:1e3:6",
            "--plot"]
    a, b, c = tmp_path / "a", tmp_path / "b", tmp_path / "c"
    assert main(argv + ["--out", str(a)]) == 0
    assert main(argv + ["--out", str(b)]) == 0
    for name in ("sweep.csv", "summary.json", "sweep.svg"):
        assert (a / name).read_bytes() == (b / name).read_bytes()
    assert main(["sweep", "--config", str(a / "manifest.json"), "--out", str(c)]) == 0
    for name in ("sweep.csv", "summary.json"):
        assert (a / name).read_bytes() == (c / name).read_bytes()
    ma, mc = read_json(a / "manifest.json"), read_json(c / "manifest.json")
    ma["config"].pop("out"), mc["config"].pop("out")
    assert ma == mc


def test_geom_check_example(tmp_path):
    out = tmp_path / "g"
    assert main(["geom-check", "--phase", "random-cubic-n3", "--trials", "10000",
                 "--out", str(out)]) == 0
    rows = read_json(out / "properties.json")
    assert {"property", "trials", "violations", "worst_slack"} <= set(rows[0])
    assert all(r["violations"] == 0 for r in rows if r["asserted"])


def test_rank_scan_example(tmp_path):
    out = tmp_path / "r"
    assert main(["rank-scan", "--n", "18", "--cubics", "20", "--points", "100",
                 "--out", str(out)]) == 0
    rep = read_json(out / "rank_report.json")
    assert rep["min_rank"] >= 12 and rep["bound"] == 12
    hist = read_csv(out / "rank_histogram.csv")
    assert hist[0] == ["rank", "count"]
    assert sum(int(c) for _, c in hist[1:]) == 20 * (100 + 36)


def test_nondegen_counterexample_exits_one(tmp_path):
    out = tmp_path / "n"
    assert main(["nondegen", "--phase", "counterexample4d", "--out", str(out)]) == 1
    rep = read_json(out / "nondegen.json")
    assert rep["K_prime_margin"] <= 0 and rep["passed"] is False
    assert main(["nondegen", "--phase", "cubic-saddle", "--out", str(tmp_path / "s")]) == 0


def test_failed_expectation_exits_one(tmp_path):
    cfg = {"subcommand": "sweep", "phase": "quadratic1d", "out": str(tmp_path),
           "lambda": {"min": 1e2, "max": 1e4, "points": 8},
           "xi": {"box": [0.0, 0.0], "points_per_axis": 1},
           "expect": {"exponent": -1.0, "tol": 0.01}}
    assert run(cfg) == 1


def test_bound_check_small(tmp_path):
    out = tmp_path / "b"
    cfg = {"subcommand": "bound-check", "phase": "quadratic1d", "out": str(out),
           "lambda": {"min": 1e2, "max": 1e4, "points": 9},
           "xi": {"box": [-0.1, 0.1], "points_per_axis": 3}, "plot": True}
    path = tmp_path / "cfg.json"
    path.write_text(json.dumps(cfg))
    assert main(["bound-check", "--config", str(path)]) == 0
    rows = read_csv(out / "bound.csv")
    assert rows[0] == ["lambda", "rhs", "sup_abs_I", "ratio"]
    s = read_json(out / "summary.json")
    assert s["N"] == 2 and s["lambda_max_extended"] == pytest.approx(4e4)
    assert (out / "bound.svg").exists()


@pytest.mark.parametrize("cfg", [
    {"subcommand": "sweep", "bogus": 1},
    {"subcommand": "sweep", "lambda": {"min": 1, "max": 10, "points": 5, "step": 2}},
    {"subcommand": "sweep", "phase": "not-a-phase"},
    {"subcommand": "sweep", "lambda": {"min": 10, "max": 1, "points": 5}},
    {"subcommand": "nondegen", "R": 0.5},
    {"subcommand": "teleport"},
    {"subcommand": "sweep", "phase": "cubic-saddle", "method": "factored"},
    {"subcommand": "rank-scan", "n": 0},
])
def test_invalid_configs_exit_two(tmp_path, cfg):
    cfg = {**cfg, "out": str(tmp_path / "o")}
    assert run(cfg) == 2


def test_flag_errors_exit_two(tmp_path):
    with pytest.raises(SystemExit) as exc:
        main(["sweep", "--lambda", "1e2-1e6"])
    assert exc.value.code == 2
    path = tmp_path / "c.json"
    path.write_text(json.dumps({"subcommand": "rank-scan"}))
    assert main(["sweep", "--config", str(path)]) == 2


def test_budget_exceeded_exits_three(tmp_path):
    out = tmp_path / "o"
    assert main(["sweep", "--phase", "cubic-saddle", "--lambda", "1e3:1e4:6", "--budget", "1e6",
                 "--out", str(out)]) == 3
    assert read_json(out / "manifest.json")["exit_status"] == 3


def test_resolve_fills_defaults_and_presets_validate():
    cfg = resolve({"subcommand": "rank-scan"})
    assert cfg["n"] == 10 and cfg["seed"] == 0 and cfg["out"]
    for name, p in PRESETS.items():
        assert resolve(p)["subcommand"] == "sweep"
    with pytest.raises(ConfigError):
        resolve({"subcommand": "geom-check", "seed": 1.5})


def test_extended_grid_reaches_factor():
    lam = np.geomspace(1e3, 1e6, 25)
    ext = extended_grid(lam, 4.0)
    assert ext[-1] == pytest.approx(4e6) and ext[0] > lam[-1]
    ratio = ext[1:] / ext[:-1]
    assert np.all(ratio <= lam[1] / lam[0] * (1 + 1e-12))


def test_reporting_nonfinite_and_atomic(tmp_path):
    text = reporting.dumps({"b": math.inf, "a": [np.float64(1.5), np.nan, np.int64(3)]})
    assert json.loads(text) == {"a": [1.5, "nan", 3], "b": "inf"}
    assert text.index('"a"') < text.index('"b"')
    reporting.write_csv(tmp_path / "t.csv", ["x", "y"], [(0.1, 2), (1e-300, -3)])
    assert (tmp_path / "t.csv").read_bytes() == b"x,y\r\n0.1,2\r\n1e-300,-3\r\n"
    assert sorted(p.name for p in tmp_path.iterdir()) == ["t.csv"]
