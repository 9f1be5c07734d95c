from __future__ import annotations

import numpy as np
import pytest

from conftest import plain_general
from lqmfg.oracle import picard_map, read_fixture, shoot_tpbvp, write_fixture
from lqmfg.verify import DEGENERATE, FIXTURE_DIR, scenario


def test_zero_sources_linear_flow():
    gs = plain_general(b1=0.4, b2=-0.5, f1=0.2, h1=1.0)
    sol = shoot_tpbvp(gs, 0.0, 0.7)
    assert np.max(np.abs(sol.phi)) <= 1e-12
    # nu' = (b1 + b2 P) nu with P from the Riccati solve
    Pf = sol.P[:, 0]
    rate = 0.4 - 0.5 * Pf
    ref = 0.7 * np.exp(np.concatenate([[0.0], np.cumsum(0.5 * (rate[1:] + rate[:-1]) * np.diff(sol.t))]))
    np.testing.assert_allclose(sol.nu, ref, atol=1e-6)


def test_identity_terminal_constants():
    gs = plain_general(h1=0.0, h2={"family": "linear", "c": 1.0})
    for eta in (-1.3, 0.0, 2.0):
        sol = shoot_tpbvp(gs, 0.0, eta)
        np.testing.assert_allclose(sol.phi[:, 0], eta, atol=1e-10)
        np.testing.assert_allclose(sol.nu, eta, atol=1e-12)


def test_common_noise_rejected():
    with pytest.raises(ValueError):
        shoot_tpbvp(scenario("tanh-crowd").general, 0.0, 0.0)


def test_batched_matches_single():
    gs = scenario("linear-degenerate").general
    batch = shoot_tpbvp(gs, 0.0, [-1.0, 0.5])
    single = shoot_tpbvp(gs, 0.0, 0.5)
    np.testing.assert_allclose(batch[1].phi0, single.phi0, atol=1e-12)


@pytest.mark.parametrize("fname,name", [("oracle_phi.csv", "tanh-crowd-degenerate"),
                                        ("oracle_phi_linear.csv", "linear-degenerate")])
def test_pinned_fixture_regression(fname, name):
    rows = read_fixture(FIXTURE_DIR / fname)
    sols = shoot_tpbvp(scenario(name).general, 0.0, [r["eta"] for r in rows])
    for r, s in zip(rows, sols):
        assert r["scenario"] == name
        np.testing.assert_allclose(s.phi0, r["phi"], atol=1e-10)


def test_frozen_tanh_values():
    rows = {r["eta"]: r["phi"][0] for r in read_fixture(FIXTURE_DIR / "oracle_phi.csv")}
    assert rows[-1.0] == pytest.approx(0.37749915724760991, abs=1e-14)
    assert rows[0.0] == pytest.approx(0.5171649855523075, abs=1e-14)
    assert rows[1.0] == pytest.approx(0.61343468469596374, abs=1e-14)


def test_adaptive_route_agrees():
    gs = scenario("tanh-crowd-degenerate").general
    a = shoot_tpbvp(gs, 0.0, 0.0)
    b = shoot_tpbvp(gs, 0.0, 0.0, integrator="rk45")
    assert np.max(np.abs(a.phi0 - b.phi0)) <= 1e-8


def test_picard_zero_sources_one_application():
    gs = plain_general(b1=0.2, f1=0.5)
    res = picard_map(gs, 0.3)
    # the map ignores its input, so the first image is already the fixed point
    assert res.iterations == 2 and res.history[-1] <= 1e-14


@pytest.mark.parametrize("name", DEGENERATE)
def test_picard_matches_shooting(name):
    gs = scenario(name).general
    sol = shoot_tpbvp(gs, 0.0, 0.0)
    pic = picard_map(gs, 0.0)
    assert np.max(np.abs(pic.ybar - sol.ybar)) <= 1e-6
    assert np.max(np.abs(pic.xbar - sol.nu)) <= 1e-6


def test_picard_warm_start_and_damping():
    gs = scenario("tanh-crowd-degenerate").general
    cold = picard_map(gs, 0.5)
    warm = picard_map(gs, 0.5, init=(cold.xbar + 0.1, cold.ybar - 0.1))
    damped = picard_map(gs, 0.5, damping=0.5)
    assert np.max(np.abs(warm.ybar - cold.ybar)) <= 1e-8
    assert np.max(np.abs(damped.ybar - cold.ybar)) <= 1e-8


def test_fixture_roundtrip(tmp_path):
    gs = plain_general(h1=0.0, h2={"family": "linear", "c": 1.0})
    rows = write_fixture(tmp_path / "f.csv", "plain", gs, 0.0, [0.25], meta="scenario=plain")
    back = read_fixture(tmp_path / "f.csv")
    assert back[0]["phi"][0] == rows[0][3]
    assert (tmp_path / "f.csv").read_text().startswith("# scenario=plain")
