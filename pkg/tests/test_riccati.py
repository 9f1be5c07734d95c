from __future__ import annotations

import numpy as np
import pytest

from lqmfg.model import TimeGrid
from lqmfg.riccati import riccati_rhs, sign_preserved, solve_riccati
from lqmfg.scenarios import VALID
from lqmfg.verify import _scalar_general, closed_form_cases, riccati_error, scenario


def test_zero_rhs_constant():
    gs = _scalar_general(0.0, 0.0, 0.0, 0.0, 2.0)
    sol = solve_riccati(gs, TimeGrid.from_step(1.0, 1e-2))
    assert np.all(sol.P == 2.0)


@pytest.mark.parametrize("case", closed_form_cases(), ids=lambda c: c[0])
def test_closed_forms(case):
    _, gs, exact = case
    assert riccati_error(gs, exact, 1e-3) <= 1e-8


@pytest.mark.parametrize("case", closed_form_cases(), ids=lambda c: c[0])
def test_fourth_order(case):
    _, gs, exact = case
    dts = np.array([0.1, 0.05, 0.025])
    errs = [riccati_error(gs, exact, dt) for dt in dts]
    order = np.polyfit(np.log(dts), np.log(errs), 1)[0]
    assert abs(order - 4) <= 0.2


def test_frozen_values():
    sol = solve_riccati(scenario("tanh-crowd").general, TimeGrid.from_step(1.0, 1e-3))
    assert sol.P[0, 0] == pytest.approx(1.0902535848933752, abs=1e-12)


def test_interpolant_and_derivative():
    _, gs, exact = closed_form_cases()[1]
    sol = solve_riccati(gs, TimeGrid.from_step(1.0, 1e-2))
    t = np.array([0.123, 0.5551, 0.9])
    np.testing.assert_allclose(sol(t)[:, 0], exact(t), atol=1e-7)
    np.testing.assert_allclose(sol.derivative(0.3), riccati_rhs(gs, 0.3, sol(0.3)))


@pytest.mark.parametrize("name", VALID)
def test_sign_and_certificate(name):
    gs = scenario(name).general
    sol = solve_riccati(gs, TimeGrid.from_step(gs.T, 1e-3), check_refinement=True)
    assert sign_preserved(sol)
    assert sol.sup_norm <= sol.certificate


def test_horizon_mismatch():
    gs = _scalar_general(0.0, 0.0, 0.0, 0.0, 1.0)
    with pytest.raises(ValueError):
        solve_riccati(gs, TimeGrid.from_step(2.0, 1e-2))


def test_csv(tmp_path):
    gs = _scalar_general(0.0, 0.0, 0.0, 0.0, 2.0)
    sol = solve_riccati(gs, TimeGrid.from_step(1.0, 0.5))
    sol.to_csv(tmp_path / "p.csv", "scenario=x")
    assert (tmp_path / "p.csv").read_text().splitlines() == ["# scenario=x", "t,P1", "0,2", "0.5,2", "1,2"]
