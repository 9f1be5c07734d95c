from __future__ import annotations

import csv
import json

import numpy as np
import pytest

from lqmfg.cli import main
from lqmfg.verify import FIXTURE_DIR


def run(argv, capsys):
    code = main(argv)
    out = capsys.readouterr()
    return code, out.out, out.err


def test_check_names_violated_assumption(tmp_path, capsys):
    code, _, err = run(["check", "--scenario", "b3-violation", "--out-dir", str(tmp_path)], capsys)
    assert code == 1 and "(B3)" in err
    data = json.loads((tmp_path / "check.json").read_text())
    assert list(data) == sorted(data)


def test_check_passing_scenario(tmp_path, capsys):
    code, out, err = run(["check", "--scenario", "tanh-crowd", "--out-dir", str(tmp_path)], capsys)
    assert code == 0 and err == ""


@pytest.mark.parametrize("argv", [
    ["solve"],
    ["solve", "--scenario", "no-such-scenario"],
    ["solve", "--scenario", "zero", "--dt", "-1"],
    ["nplayer", "--scenario", "zero", "--players", "1"],
])
def test_usage_errors(argv, tmp_path, capsys):
    code, _, err = run(argv + ["--out-dir", str(tmp_path)], capsys)
    assert code == 2 and "error" in err


def test_parser_exits_two(capsys):
    with pytest.raises(SystemExit) as exc:
        main(["solve", "--scenario", "zero", "--config", "x.json"])
    assert exc.value.code == 2


def test_solve_tanh_crowd(tmp_path, capsys):
    code, out, _ = run(["solve", "--scenario", "tanh-crowd", "--out-dir", str(tmp_path)], capsys)
    assert code == 0
    lines = (tmp_path / "phi.csv").read_text().splitlines()
    assert lines[0].startswith("# scenario=tanh-crowd seed=")
    rows = list(csv.DictReader(lines[1:]))
    at0 = {float(r["nu"]): float(r["Phi1"]) for r in rows if float(r["t"]) == 0.0}
    ref = [r for r in csv.DictReader(l for l in (FIXTURE_DIR / "oracle_phi.csv").read_text().splitlines()
                                     if not l.startswith("#"))
           if float(r["eta"]) == 0.0][0]
    # the common noise of tanh-crowd moves Phi(0, 0) by under 1e-3 from its degenerate twin
    assert abs(at0[0.0] - float(ref["phi1"])) <= 1e-3
    summary = json.loads((tmp_path / "solve.json").read_text())
    assert summary["phi0"][0] == pytest.approx(at0[0.0], abs=1e-12)
    assert list(summary) == sorted(summary)


def test_simulate_deterministic(tmp_path, capsys):
    outs = []
    for threads in ("1", "2"):
        d = tmp_path / threads
        code, _, _ = run(["simulate", "--scenario", "tanh-crowd", "--paths", "2", "--particles", "2000",
                          "--threads", threads, "--out-dir", str(d)], capsys)
        assert code in (0, 1)
        outs.append([(d / f"path_{k:03d}.csv").read_bytes() for k in range(2)])
    assert outs[0] == outs[1]


def test_verify_zero(tmp_path, capsys):
    code, out, _ = run(["verify", "--scenario", "zero", "--out-dir", str(tmp_path)], capsys)
    assert code == 0
    assert all(l.startswith("[PASS]") for l in out.splitlines())
    res = json.loads((tmp_path / "verify.json").read_text())
    assert all(r["passed"] for r in res)


def test_nplayer_zero(tmp_path, capsys):
    code, out, _ = run(["nplayer", "--scenario", "zero", "--players", "2", "5", "--trials", "2",
                        "--out-dir", str(tmp_path)], capsys)
    assert code == 0
    rows = list(csv.DictReader((tmp_path / "nplayer_gaps.csv").read_text().splitlines()[1:]))
    assert len(rows) == 4 and all(float(r["gap"]) == 0.0 for r in rows)


def test_report_zero(tmp_path, capsys):
    code, _, _ = run(["report", "--scenario", "zero", "--paths", "1", "--particles", "500",
                      "--out-dir", str(tmp_path)], capsys)
    assert code == 0
    rep = json.loads((tmp_path / "report.json").read_text())
    # sampling error of 500 particles only
    assert rep["assumptions"]["passed"] and 0.0 <= rep["control_mean_gap"] <= 0.1
    assert np.isfinite(rep["simulate"]["paths_stats"][0]["rel_dev_x"])
    assert [v["x"] for v in rep["value_slopes_exploratory"]] == [-1.0, 0.0, 1.0]
