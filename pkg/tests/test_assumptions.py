from __future__ import annotations

import numpy as np
import pytest

from conftest import lq_config
from lqmfg.assumptions import (check_general, check_lq, difference_quotients, lq_samples,
                               sample_pairs)
from lqmfg.model import spec_from_dict
from lqmfg.reduction import lq_to_general
from lqmfg.scenarios import VALID, load_scenario


def test_zero_derivative_case_a():
    lq = spec_from_dict(lq_config(B=3.0))
    rep = check_lq(lq, lq_samples(lq, 500))
    assert rep.passed and rep.case == "a"


def test_sign_flip_selects_case_b():
    lq = spec_from_dict(lq_config(g={"family": "linear", "c": -2.0}, Q=0.0, B=0.0), validate=False)
    rep = check_lq(lq, lq_samples(lq, 500))
    assert not rep["B4(a) terminal"].passed
    assert rep.case == "b"


def test_b3_violation_named():
    sc = load_scenario("b3-violation", validate=False)
    rep = check_lq(sc.lq, lq_samples(sc.lq, 2000))
    assert not rep.passed
    assert any("(B3)" in f for f in rep.failures())


def test_tanh_crowd_margins_frozen():
    lq = load_scenario("tanh-crowd").lq
    rep = check_lq(lq, lq_samples(lq, 10_000))
    assert rep.passed and rep.case == "a"
    # 1 + h' = 1 + 0.2 sech^2 is smallest at the sample edge |x| ~ 5; eps0 = 0.5
    margin = rep["(B3) |1+h'|>=eps0"].margin
    assert margin == pytest.approx(0.5000363339143141, abs=1e-12)
    assert 0.5 < margin < 0.5 + 0.2 / np.cosh(4.9) ** 2


@pytest.mark.parametrize("name", VALID)
def test_gallery_passes(name):
    sc = load_scenario(name)
    if sc.lq is not None:
        rep = check_lq(sc.lq, lq_samples(sc.lq, 2000))
    else:
        rep = check_general(sc.general, sample_pairs(sc.general, 1024))
    assert rep.passed, rep.failures()


def test_zero_sources_zero_quotients():
    gs = lq_to_general(spec_from_dict(lq_config()))
    q = difference_quotients(gs, sample_pairs(gs, 64))
    for key, val in q.items():
        assert not np.any(np.nan_to_num(val)), key


def test_recheck_reproduces_margin():
    lq = load_scenario("tanh-crowd").lq
    rep = check_lq(lq, lq_samples(lq, 1000))
    c = rep["(B3) |1+h'|>=eps0"]
    assert c.recheck() == pytest.approx(c.margin, abs=1e-12)


def test_report_json_sorted():
    lq = load_scenario("zero").lq
    text = check_lq(lq, lq_samples(lq, 100)).to_json()
    assert text.index('"case"') < text.index('"passed"')
