"""Acceptance suite: one test per criterion, each printing a single pass/fail line."""
from __future__ import annotations

import pytest

from lqmfg.verify import CRITERIA, Settings, run_criterion


@pytest.mark.slow
@pytest.mark.parametrize("number", sorted(CRITERIA), ids=lambda n: f"C{n}")
def test_criterion(number, capsys):
    res = run_criterion(number, Settings())
    with capsys.disabled():
        print(f"\n{res.line()}")
    assert res.passed, res.detail
