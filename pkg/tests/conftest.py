from __future__ import annotations

import copy

import pytest

from lqmfg.model import spec_from_dict
from lqmfg.scenarios import GALLERY
from lqmfg.verify import master_field, scenario


def lq_config(**over):
    """The all-zero LQ config with selected entries replaced."""
    cfg = copy.deepcopy(GALLERY["zero"])
    cfg.pop("checks", None)
    cfg.update(over)
    return cfg


ZERO = {"family": "zero"}


def plain_general(f0=ZERO, h2=ZERO, b0=ZERO, b1=0.0, b2=0.0, f1=0.0, f2=0.0, sigma=0.0, h1=1.0):
    """Scalar general spec with constant coefficients and maps on the state mean only."""
    cfg = {"kind": "general", "name": "plain", "T": 1.0, "K": 10.0, "n": 1, "d": 1,
           "b1": b1, "b2": [b2], "f1": [f1], "f2": [[f2]], "sigma1": [0.0], "sigma2": [[0.0]],
           "sigma": [sigma], "h1": [h1], "b0": {"x": b0, "y": [ZERO]},
           "f0": [{"x": f0, "y": [ZERO]}], "sigma0": [{}], "h2": [h2]}
    return spec_from_dict(cfg, validate=False)


@pytest.fixture(scope="session")
def field_of():
    return master_field


@pytest.fixture(scope="session")
def scen():
    return scenario
