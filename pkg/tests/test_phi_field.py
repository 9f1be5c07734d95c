from __future__ import annotations

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from lqmfg.model import SpaceGrid, TimeGrid
from lqmfg.phi_field import (CFLError, DomainError, MasterField, eval_U, interior_lattice,
                             master_residual, slope_certificate, solve_phi, terminal_residual)
from lqmfg.riccati import solve_riccati
from lqmfg.scenarios import VALID
from conftest import plain_general as general
from lqmfg.verify import FIXTURE_DIR, read_fixture, scenario

def solve(gs, dt=1e-2, dnu=0.1):
    grid = TimeGrid.from_step(gs.T, dt)
    P = solve_riccati(gs, grid)
    return MasterField(P, solve_phi(gs, P, grid, SpaceGrid(-2.0, 2.0, dnu)))


def test_zero_data_zero_field():
    f = solve(general())
    assert not np.any(f.Phi.values)


def test_constant_source_transport():
    f = solve(general(f0={"family": "constant", "c": 0.7}, b1=0.3))
    t = f.grid.nodes
    expected = np.broadcast_to((0.7 * (1 - t))[:, None], f.Phi.values.shape[:2])
    np.testing.assert_allclose(f.Phi.values[:, :, 0], expected, atol=1e-12)


def test_zero_everything_residual_vanishes():
    gs = general(h1=0.0, sigma=0.3)
    f = solve(gs)
    assert not np.any(f.P.P)
    for t, x, nu in interior_lattice(f):
        assert np.all(master_residual(f, gs, t, x, nu) == 0)


def test_pde_matches_pinned_oracle(field_of):
    f = field_of("tanh-crowd-degenerate")
    for row in read_fixture(FIXTURE_DIR / "oracle_phi.csv"):
        assert abs(f.Phi(0.0, np.array([row["eta"]]))[0, 0] - row["phi"][0]) <= 1e-3


def test_frozen_value(field_of):
    f = field_of("tanh-crowd")
    assert f.Phi(0.0, np.array([0.0]))[0, 0] == pytest.approx(0.516373323572218, abs=1e-12)


def test_terminal_condition_exact(field_of):
    gs = scenario("tanh-crowd").general
    f = field_of("tanh-crowd")
    x = np.array([-2.0, 0.0, 3.0])[:, None]
    assert np.max(np.abs(terminal_residual(f, gs, x, f.Phi.nu))) <= 1e-12
    # terminal slice is G (x + g(nu)) for the LQ game
    lq = scenario("tanh-crowd").lq
    np.testing.assert_allclose(eval_U(f, 1.0, 0.5, f.Phi.nu)[:, 0], lq.G * (0.5 + lq.g(0.0, f.Phi.nu)),
                               atol=1e-14)


@pytest.mark.parametrize("name", VALID)
def test_master_residual_core(name, field_of):
    f = field_of(name)
    gs = scenario(name).general
    worst = 0.0
    for t, x, nu in interior_lattice(f):
        r, terms = master_residual(f, gs, t, x, nu, return_terms=True)
        assert not np.any(terms["xx"])
        worst = max(worst, float(np.max(np.abs(r))))
    assert worst <= 5e-2


@settings(max_examples=40, deadline=None)
@given(t=st.floats(0, 1), x1=st.floats(-10, 10), x2=st.floats(-10, 10), nu=st.floats(-4.9, 4.9))
def test_affine_in_x(t, x1, x2, nu):
    from lqmfg.verify import master_field
    f = master_field("tanh-crowd")
    du = eval_U(f, t, x1, np.array([nu])) - eval_U(f, t, x2, np.array([nu]))
    np.testing.assert_allclose(du[0], f.P(t) * (x1 - x2), rtol=1e-12, atol=1e-12)
    np.testing.assert_allclose(eval_U(f, t, 0.0, np.array([nu]))[0], f.Phi(t, np.array([nu]))[0])


def test_outside_domain(field_of):
    with pytest.raises(DomainError):
        field_of("tanh-crowd").Phi(0.0, np.array([7.0]))


def test_cfl_guard():
    gs = scenario("tanh-crowd").general
    grid = TimeGrid.from_step(1.0, 1e-2)
    P = solve_riccati(gs, grid)
    with pytest.raises(CFLError) as info:
        solve_phi(gs, P, grid, SpaceGrid(-5, 5, 1e-3))
    assert info.value.required_dt < 1e-2


def test_generic_callable_field(field_of):
    f = field_of("tanh-crowd")
    gs = scenario("tanh-crowd").general
    r_exact = master_residual(f, gs, 0.5, 0.3, 0.2)
    r_generic = master_residual(lambda t, x, nu: eval_U(f, t, x, nu), gs, 0.5, 0.3, 0.2,
                                steps=(1e-3, 1e-2, 1e-2))
    assert abs(r_generic[0] - r_exact[0]) < 5e-2


def test_slope_certificate_zero(field_of):
    assert slope_certificate(field_of("zero")) == pytest.approx(1.0, abs=1e-12)
