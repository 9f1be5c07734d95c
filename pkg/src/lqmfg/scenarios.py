"""Built-in scenario gallery and scenario loading."""
from __future__ import annotations

import copy
import json
from dataclasses import dataclass, field
from pathlib import Path

from .model import GeneralSpec, LQSpec, SimConfig, parse_config, spec_from_dict
from .reduction import lq_to_general

ZERO = {"family": "zero"}


def _lq(name, *, A=0.0, B=1.0, Q=1.0, R=1.0, F=0.0, G=1.0, sigma=(0.3,), sigma0=(0.3,),
        maps=None, T=1.0, eps0=0.5, checks=(), sim=None):
    maps = maps or {}
    cfg = {"kind": "lq", "name": name, "T": T, "K": 10.0, "eps0": eps0,
           "A": A, "B": B, "Q": Q, "R": R, "F": F, "G": G,
           "sigma": list(sigma), "sigma0": list(sigma0)}
    for k in ("f", "b", "l", "h", "q", "g"):
        cfg[k] = maps.get(k, ZERO)
    cfg["checks"] = list(checks)
    if sim:
        cfg["sim"] = sim
    return cfg


_TANH_MAPS = {
    "h": {"family": "tanh", "amp": 0.2},
    "b": {"family": "tanh", "amp": -0.1},
    "f": {"family": "constant", "c": 0.1},
    "l": {"family": "constant", "c": 0.5},
    "g": {"family": "constant", "c": 0.2},
}

_LINEAR_MAPS = {
    "f": {"family": "linear", "c": 0.1},
    "b": {"family": "linear", "c": 0.2},
    "l": {"family": "affine", "a": 0.3, "c": 0.2},
    "h": {"family": "linear", "c": 0.3},
    "q": {"family": "linear", "c": 0.1},
    "g": {"family": "affine", "a": 0.2, "c": 0.5},
}

_SIN_MAPS = {
    "f": {"family": "sin", "amp": 0.2},
    "b": {"family": "sin", "amp": 0.1},
    "l": {"family": "sin", "amp": 0.3},
    "h": {"family": "sin", "amp": 0.1},
    "g": {"family": "sin", "amp": 0.3},
}

_ALL = ("riccati", "phi", "residual", "lipschitz", "consistency", "optimality", "measurability")

GALLERY: dict[str, dict] = {
    "zero": _lq("zero", checks=_ALL + ("nplayer-zero",)),
    "tanh-crowd": _lq("tanh-crowd", A=0.1, maps=_TANH_MAPS, checks=_ALL + ("nplayer",)),
    "tanh-crowd-degenerate": _lq("tanh-crowd-degenerate", A=0.1, sigma0=(0.0,), maps=_TANH_MAPS,
                                 checks=_ALL + ("oracle",)),
    "linear-degenerate": _lq("linear-degenerate", A=0.2, R=2.0, F=0.5, sigma=(0.2,),
                             sigma0=(0.0,), maps=_LINEAR_MAPS, checks=_ALL + ("oracle",)),
    "sin-wave": _lq("sin-wave", A={"family": "sin", "a": 0.0, "b": 0.2, "omega": 6.283185307179586},
                    F=0.2, G=0.5, sigma=(0.3, 0.1), sigma0=(0.2, 0.1), maps=_SIN_MAPS, checks=_ALL),
    "coupled-2": {
        "kind": "general", "name": "coupled-2", "T": 1.0, "K": 10.0, "n": 2, "d": 1,
        "b1": -0.2, "b2": [-0.5, -0.3], "f1": [0.5, 0.2],
        "f2": [[0.1, 0.05], [0.05, 0.1]],
        "sigma1": [0.0], "sigma2": [[0.0], [0.0]], "sigma": [0.3],
        "h1": [1.0, 0.5],
        "b0": {"x": {"family": "sin", "amp": 0.1},
               "y": [{"family": "tanh", "amp": 0.1}, {"family": "linear", "c": 0.05}]},
        "f0": [{"x": {"family": "tanh", "amp": 0.1}, "y": [ZERO, {"family": "linear", "c": 0.02}]},
               {"x": {"family": "constant", "c": 0.1}, "y": [{"family": "tanh", "amp": 0.02}, ZERO]}],
        "sigma0": [{}],
        "h2": [{"family": "tanh", "amp": 0.3}, {"family": "sin", "amp": 0.2}],
        "checks": ["riccati", "phi", "residual", "lipschitz", "oracle"],
    },
    "b3-violation": _lq("b3-violation", maps={"h": {"family": "linear", "c": -1.0}}, checks=()),
}

# scenarios expected to satisfy every assumption; "b3-violation" is a negative example
VALID = tuple(k for k in GALLERY if k != "b3-violation")


@dataclass
class Scenario:
    name: str
    spec: LQSpec | GeneralSpec
    sim: SimConfig = field(default_factory=SimConfig)
    checks: tuple = ()
    config: dict = field(default_factory=dict)

    @property
    def general(self) -> GeneralSpec:
        if isinstance(self.spec, GeneralSpec):
            return self.spec
        cached = getattr(self, "_general", None)
        if cached is None:
            cached = lq_to_general(self.spec)
            self._general = cached
        return cached

    @property
    def lq(self) -> LQSpec | None:
        return self.spec if isinstance(self.spec, LQSpec) else None


def scenario_from_dict(cfg: dict, validate: bool = True) -> Scenario:
    cfg = copy.deepcopy(cfg)
    sim = SimConfig(**cfg.get("sim", {}))
    checks = tuple(cfg.get("checks", ()))
    spec = spec_from_dict(cfg, validate=validate)
    return Scenario(name=spec.name, spec=spec, sim=sim, checks=checks, config=cfg)


def load_scenario(name: str | None = None, config: str | Path | None = None,
                  validate: bool = True) -> Scenario:
    """Gallery scenario by name, or a JSON config file."""
    if config is not None:
        cfg = parse_config(Path(config).read_text(encoding="utf-8"))
        return scenario_from_dict(cfg, validate)
    if name not in GALLERY:
        raise KeyError(f"unknown scenario {name!r}; known: {', '.join(GALLERY)}")
    return scenario_from_dict(GALLERY[name], validate)


def gallery_json(name: str) -> str:
    return json.dumps(GALLERY[name], sort_keys=True, indent=1)
