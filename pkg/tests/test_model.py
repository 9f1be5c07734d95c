from __future__ import annotations

import json

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from conftest import lq_config
from lqmfg.model import (ConfigError, LQSpec, NonlinearMap, ScalarCoefficient, SimConfig,
                         SpaceGrid, SpecValidationError, TimeGrid, dump_spec, load_spec,
                         sample_domain, spec_from_dict)


def test_zero_config_is_valid():
    spec = spec_from_dict(lq_config())
    assert isinstance(spec, LQSpec)
    assert spec.h.is_zero()


def test_negative_R_rejected():
    with pytest.raises(SpecValidationError, match=r"R\(t\) > 0 violated"):
        spec_from_dict(lq_config(R=-1.0))


def test_b3_margin_rejected():
    with pytest.raises(SpecValidationError, match=r"\(B3\) margin violated"):
        spec_from_dict(lq_config(h={"family": "linear", "c": -1.0}))


def test_validate_false_keeps_invalid_spec():
    spec = spec_from_dict(lq_config(h={"family": "linear", "c": -1.0}), validate=False)
    assert float(spec.h.d1(0.0, 0.0)) == -1.0


def test_malformed_json():
    with pytest.raises(ConfigError):
        load_spec("{not json")


def test_unknown_key():
    with pytest.raises(SpecValidationError, match="unknown keys"):
        spec_from_dict(lq_config(bogus=1))


def test_dump_roundtrip():
    spec = spec_from_dict(lq_config(A=0.3, h={"family": "tanh", "amp": 0.2}))
    text = dump_spec(spec)
    again = load_spec(text)
    assert dump_spec(again) == text
    assert json.loads(text)["A"] == spec.to_dict()["A"]


def test_time_grid():
    g = TimeGrid.from_step(1.0, 1e-3)
    assert g.M == 1000
    assert g.nodes[-1] == 1.0
    assert g.index(0.5) == 500
    with pytest.raises(ValueError):
        TimeGrid.from_step(1.0, 0.3)


def test_space_grid():
    s = SpaceGrid(-5.0, 5.0, 1e-2)
    assert s.N == 1000
    assert s.nodes[0] == -5.0 and s.nodes[-1] == 5.0


def test_sim_config_rejects_zero_particles():
    with pytest.raises(ValueError):
        SimConfig(particles=0)


def test_scalar_coefficient_families():
    c = ScalarCoefficient.from_config({"family": "sin", "a": 1.0, "b": 0.5, "omega": 2.0})
    t = np.linspace(0, 1, 5)
    np.testing.assert_allclose(c(t), 1.0 + 0.5 * np.sin(2.0 * t), atol=1e-15)
    assert ScalarCoefficient.constant(2.5)(0.3) == 2.5


def test_map_derivatives_match_finite_differences():
    m = NonlinearMap.from_config({"sum": [{"family": "tanh", "amp": 0.3, "scale": 1.5},
                                          {"family": "sin", "amp": 0.2}]})
    x = np.linspace(-3, 3, 13)
    h = 1e-6
    np.testing.assert_allclose(m.d1(0.0, x), (m(0.0, x + h) - m(0.0, x - h)) / (2 * h), atol=1e-8)


def test_sample_domain_point_box():
    pts = sample_domain([(0.5, 0.5), (2.0, 2.0)], 1)
    np.testing.assert_array_equal(pts, [[0.5, 2.0]])


def test_sample_domain_deterministic():
    a = sample_domain([(0, 1), (0, 1)], 50, seed=3)
    b = sample_domain([(0, 1), (0, 1)], 50, seed=3)
    np.testing.assert_array_equal(a, b)


def test_sample_domain_gaps():
    pts = sample_domain([(0, 1)] * 3, 1000, seed=0)
    for j in range(3):
        s = np.sort(np.concatenate([[0.0], pts[:, j], [1.0]]))
        assert np.max(np.diff(s)) < 0.05


@settings(max_examples=30, deadline=None)
@given(lo=st.floats(-10, 10), width=st.floats(0.0, 5.0), count=st.integers(1, 64))
def test_sample_domain_inside_box(lo, width, count):
    pts = sample_domain([(lo, lo + width), (0.0, 1.0)], count)
    assert pts.shape == (count, 2)
    assert np.all(pts[:, 0] >= lo) and np.all(pts[:, 0] <= lo + width)
