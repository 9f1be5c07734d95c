from __future__ import annotations

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.optimize import brentq

from conftest import lq_config
from lqmfg.model import NonlinearMap, spec_from_dict
from lqmfg.reduction import RhoMap, invert_rho, lq_to_general, mu_from_means


def test_identity_when_h_zero():
    assert invert_rho(NonlinearMap.zero(), 0.5, 0.0, 3.7) == pytest.approx(3.7, abs=1e-15)


def test_linear_h():
    h = NonlinearMap.from_config({"family": "linear", "c": 0.5})
    assert invert_rho(h, 0.5, 0.0, 3.0) == pytest.approx(2.0, abs=1e-12)


def test_sine_h_matches_bracketing_root():
    h = NonlinearMap.from_config({"family": "sin", "amp": 0.1})
    ref = brentq(lambda m: m + 0.1 * np.sin(m) - 2.0, -10, 10, xtol=1e-14)
    assert invert_rho(h, 0.5, 0.0, 2.0) == pytest.approx(ref, abs=1e-12)


@settings(max_examples=60, deadline=None)
@given(amp=st.floats(-0.6, 0.6), z=st.floats(-50, 50), t=st.floats(0, 1))
def test_rho_residual_and_slope(amp, z, t):
    h = NonlinearMap.from_config({"family": "tanh", "amp": amp})
    eps0 = 1 - abs(amp)
    rho = RhoMap(h, eps0)
    m = rho(t, z)
    assert abs(m + float(h(t, m)) - z) <= 1e-10 * max(1.0, abs(z))
    dz = 1e-3
    assert abs(rho(t, z + dz) - m) / dz <= 1 / eps0 + 1e-6


def test_vectorised_matches_scalar():
    h = NonlinearMap.from_config({"family": "tanh", "amp": 0.4})
    rho = RhoMap(h, 0.6)
    z = np.linspace(-4, 4, 9)
    np.testing.assert_allclose(rho(0.2, z), [rho(0.2, v) for v in z], atol=0)


def test_b1_formula():
    gs = lq_to_general(spec_from_dict(lq_config(A=1.0, B=1.0, F=0.5, R=1.0, Q=1.0)))
    assert gs.b1(0.3) == pytest.approx(0.5)
    assert gs.b2(0.3)[0] == pytest.approx(-1.0)
    assert gs.f1(0.3)[0] == pytest.approx(0.75)


def test_zero_maps_give_zero_sources():
    gs = lq_to_general(spec_from_dict(lq_config()))
    x = np.linspace(-2, 2, 5)
    b0, f0, _ = gs.sources(0.5, x, np.ones((5, 1)))
    assert not np.any(b0) and not np.any(f0)
    assert not np.any(gs.h2(x))


def test_consistent_control_mean_example():
    lq = spec_from_dict(lq_config(h={"family": "linear", "c": 0.5}))
    gs = lq_to_general(lq)
    assert mu_from_means(lq, 0.0, 0.0, 1.0) == pytest.approx(-2 / 3, abs=1e-12)
    b0, _, _ = gs.sources(0.0, np.array([0.0]), np.array([[1.0]]))
    assert b0[0] == pytest.approx(1 / 3, abs=1e-12)


def test_terminal_map_is_G_times_g():
    lq = spec_from_dict(lq_config(G=2.0, g={"family": "tanh", "amp": 0.3}))
    gs = lq_to_general(lq)
    x = np.linspace(-3, 3, 7)
    np.testing.assert_allclose(gs.h2(x)[:, 0], 2.0 * lq.g(0.0, x))
