import csv
import json
import math
import subprocess
import sys

import pytest

from wrdp.cli import (
    CURVES_HEADER,
    SIMULATE_HEADER,
    ParseError,
    fmt_number,
    main,
    resolve_curves,
    resolve_simulate,
    resolve_vector,
)


def run_cli(args, capsys):
    code = main(args)
    out, err = capsys.readouterr()
    return code, out, err


def read_csv(path):
    with open(path, newline="") as fh:
        return list(csv.reader(fh))


class TestCurves:
    def test_three_c_curves(self, tmp_path, capsys):
        out = tmp_path / "three_c.csv"
        code, stdout, _ = run_cli(["curves", "--gamma", "1", "--R", "0:2:0.01", "--C", "0", "1",
                                   "inf", "--P", "0.1", "--out", str(out)], capsys)
        assert code == 0
        summary = json.loads(stdout)
        assert summary["rows"] == 3 * 201
        assert summary["resolved_config"]["C_list"] == [0.0, 1.0, "inf"]
        rows = read_csv(out)
        assert rows[0] == CURVES_HEADER
        d = {(r[1], float(r[0])): float(r[3]) for r in rows[1:]}
        for R in (0.9, 1.5, 2.0):
            assert abs(d[("1.0", R)] - d[("inf", R)]) < 1e-6
        assert abs(d[("0.0", 2.0)] - d[("inf", 2.0)]) < 1e-6
        assert d[("0.0", 1.0)] - d[("inf", 1.0)] > 1e-3
        gp = (tmp_path / "three_c.gp").read_text()
        assert "three_c.csv" in gp and "separator ','" in gp
        assert open(out, "rb").read().count(b"\r") == 0

    def test_zero_rate_intercepts(self, tmp_path, capsys):
        cfg = tmp_path / "c.json"
        cfg.write_text(json.dumps({"gamma": 1, "R_grid": {"start": 0, "stop": 0.1, "step": 0.05},
                                   "C_list": [1], "P_list": [0, 0.1, 1, "inf"],
                                   "output": str(tmp_path / "f2.csv")}))
        assert run_cli(["curves", "--config", str(cfg)], capsys)[0] == 0
        rows = read_csv(tmp_path / "f2.csv")[1:]
        at0 = {r[2]: float(r[3]) for r in rows if r[0] == "0.0"}
        assert at0["0.0"] == 2.0
        assert at0["0.1"] == pytest.approx(1.4675444679663241, abs=1e-12)
        assert at0["1.0"] == 1.0
        for r in rows:
            if r[2] == "inf":
                assert float(r[3]) == pytest.approx(2 ** (-2 * float(r[0])), rel=1e-12)

    def test_vector_source_curves(self, tmp_path, capsys):
        out = tmp_path / "v.csv"
        code, _, _ = run_cli(["curves", "--gammas", "1", "1", "--R", "0:1:0.5", "--C", "inf",
                              "--P", "0", "--out", str(out)], capsys)
        assert code == 0
        rows = read_csv(out)
        assert float(rows[-1][3]) == pytest.approx(1.1715728752538097, abs=1e-9)

    def test_png(self, tmp_path, capsys):
        pytest.importorskip("matplotlib")
        out = tmp_path / "p.csv"
        code, stdout, _ = run_cli(["curves", "--R", "0:1:0.1", "--out", str(out), "--figure"],
                                  capsys)
        assert code == 0
        assert (tmp_path / "p.png").read_bytes()[:4] == b"\x89PNG"

    def test_bad_grid(self):
        with pytest.raises(ParseError, match="step"):
            resolve_curves({"R_grid": {"start": 0, "stop": 1, "step": 0}})
        with pytest.raises(ParseError, match="exceeds"):
            resolve_curves({"R_grid": {"start": 2, "stop": 1, "step": 0.1}})
        with pytest.raises(ParseError):
            resolve_curves({"C_list": []})

    def test_defaults_logged(self):
        r = resolve_curves({})
        assert r["R_grid"] == {"start": 0.0, "stop": 2.0, "step": 0.01}
        assert r["gamma"] == 1.0 and r["P_list"] == [0.1]


class TestThresholds:
    def test_rate(self, capsys):
        code, out, _ = run_cli(["thresholds", "--gamma", "1", "--C", "inf", "--P", "0.1"], capsys)
        assert code == 0
        t = json.loads(out)["thresholds"]
        assert t["R_threshold"] == pytest.approx(0.4546, abs=0.005)

    def test_c_zero_rate(self, capsys):
        out = run_cli(["thresholds", "--gamma", "1", "--R", "0", "--P", "0.05"], capsys)[1]
        assert json.loads(out)["thresholds"]["C_threshold"] == 0.0

    def test_p(self, capsys):
        out = run_cli(["thresholds", "--gamma", "1", "--R", "1", "--C", "0"], capsys)[1]
        assert json.loads(out)["thresholds"]["P_threshold"] == pytest.approx(0.25)

    def test_none(self, capsys):
        out = run_cli(["thresholds", "--gamma", "1", "--C", "1", "--P", "0", "--R", "1"], capsys)[1]
        t = json.loads(out)["thresholds"]
        assert t["R_threshold"] == "none" and t["C_threshold"] == "none"

    def test_table(self, capsys):
        out = run_cli(["thresholds", "--R", "1", "--C", "0", "--table"], capsys)[1]
        assert "0.25" in out

    def test_needs_pair(self, capsys):
        code, _, err = run_cli(["thresholds", "--R", "1"], capsys)
        assert code != 0 and json.loads(err)["error"] == "ParseError"


class TestVector:
    def test_equal_components(self, tmp_path, capsys):
        cfg = tmp_path / "v.json"
        cfg.write_text(json.dumps({"gammas": [1, 1], "R": 1, "C": "inf", "P": 0}))
        code, out, _ = run_cli(["vector", "--config", str(cfg)], capsys)
        d = json.loads(out)
        assert code == 0
        assert d["D"] == pytest.approx(1.17157, abs=1e-5)
        assert d["allocation"]["r_prime"] == ["inf", "inf"]
        assert d["resolved_config"]["solver"]["max_rounds"] == 500
        assert "universality_gap" in d and "solver_meta" in d

    def test_scalar_reduction(self, capsys):
        out = run_cli(["vector", "--gammas", "1", "--R", "1", "--C", "1", "--P", "0"], capsys)[1]
        assert json.loads(out)["D"] == pytest.approx(0.32294901687515765, abs=1e-9)

    def test_universality(self, capsys):
        out = run_cli(["vector", "--gammas", "4", "1", "--R", "1", "--C", "inf"], capsys)[1]
        assert json.loads(out)["universality_gap"]["gap"] > 0.01

    def test_oracle_override(self, capsys):
        out = run_cli(["vector", "--gammas", "2", "1", "--R", "0.5", "--C", "0.5", "--P", "0"],
                      capsys)[1]
        assert json.loads(out)["D"] > 0
        r = resolve_vector({"gammas": [2, 1], "R": 0.5, "solver": {"oracle": True}})
        assert r["solver"]["oracle"] is True

    def test_parse_error_line(self, tmp_path, capsys):
        cfg = tmp_path / "bad.json"
        cfg.write_text('{\n  "gammas": [1, 1],\n  "R": ,\n}')
        code, _, err = run_cli(["vector", "--config", str(cfg)], capsys)
        e = json.loads(err)
        assert code != 0 and e["error"] == "ParseError" and e["line"] == 3

    def test_parse_error_field(self):
        with pytest.raises(ParseError) as info:
            resolve_vector({"gammas": [1, -1], "R": 1})
        assert info.value.field == "gammas[1]"
        with pytest.raises(ParseError) as info:
            resolve_vector({"gammas": [1], "R": 1, "Q": 2})
        assert info.value.field == "Q"


class TestSimulate:
    ARGS = ["simulate", "--n", "4", "--R", "1", "--C", "1", "--P", "0", "--trials", "400",
            "--seed", "7"]

    def test_byte_identical(self, tmp_path, capsys):
        a, b = tmp_path / "a.json", tmp_path / "b.json"
        assert run_cli(self.ARGS + ["--out", str(a)], capsys)[0] == 0
        assert run_cli(self.ARGS + ["--out", str(b)], capsys)[0] == 0
        assert a.read_bytes() == b.read_bytes()
        d = json.loads(a.read_text())
        assert d["resolved_config"]["estimator"]["pilot_fraction"] == 0.1
        assert d["resolved_config"]["budget"] == 2 ** 22
        rows = read_csv(tmp_path / "a.csv")
        assert rows[0] == SIMULATE_HEADER
        assert rows[1][0] == "4" and rows[1][-1] == "7"
        assert float(rows[1][5]) == d["empirical_distortion"]

    def test_csv_appends(self, tmp_path, capsys):
        path = tmp_path / "runs.csv"
        for seed in ("1", "2"):
            args = self.ARGS[:-1] + [seed, "--out", str(tmp_path / "r.json"), "--csv", str(path)]
            assert run_cli(args, capsys)[0] == 0
        rows = read_csv(path)
        assert len(rows) == 3 and rows[0] == SIMULATE_HEADER

    def test_zero_trials(self, capsys):
        code, _, err = run_cli(["simulate", "--n", "4", "--R", "1", "--trials", "0"], capsys)
        e = json.loads(err)
        assert code != 0 and e["field"] == "trials"

    def test_budget(self, capsys):
        code, _, err = run_cli(["simulate", "--n", "24", "--R", "1", "--trials", "1"], capsys)
        e = json.loads(err)
        assert code != 0 and e["error"] == "BudgetExceeded" and "R=1" in e["message"]

    def test_infinite_c_rejected(self):
        with pytest.raises(ParseError):
            resolve_simulate({"n": 4, "R": 1, "C": "inf", "trials": 1})

    def test_cli_n8_example_deterministic(self, tmp_path, capsys):
        args = ["simulate", "--n", "8", "--R", "1", "--C", "1", "--P", "0", "--trials", "20000",
                "--seed", "7"]
        a, b = tmp_path / "a.json", tmp_path / "b.json"
        assert run_cli(args + ["--out", str(a)], capsys)[0] == 0
        assert run_cli(args + ["--out", str(b)], capsys)[0] == 0
        assert a.read_bytes() == b.read_bytes()
        assert json.loads(a.read_text())["reference"] == pytest.approx(0.32294901687515765)


def test_usage_error(capsys):
    code, _, err = run_cli(["nope"], capsys)
    assert code != 0 and json.loads(err)["error"] == "UsageError"


def test_missing_config_file(capsys):
    code, _, err = run_cli(["vector", "--config", "/nonexistent/x.json"], capsys)
    assert code == 3 and json.loads(err)["error"] == "FileNotFoundError"


def test_fmt_number():
    assert fmt_number(0.1) == "0.1"
    assert fmt_number(math.inf) == "inf"
    assert fmt_number(12) == "12"
    assert fmt_number(1234567.5) == "1234567.5"


def test_module_entry_point(tmp_path):
    proc = subprocess.run([sys.executable, "-m", "wrdp", "thresholds", "--R", "1", "--C", "0"],
                          capture_output=True, text=True, env={"LC_ALL": "de_DE.UTF-8",
                                                                "PATH": "/usr/bin:/bin"})
    assert proc.returncode == 0
    assert json.loads(proc.stdout)["thresholds"]["P_threshold"] == 0.25
