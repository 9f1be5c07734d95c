"""Problem data for LQ extended mean field games and the general conditional
mean field FBSDE they reduce to.

Coefficients are built from a small vocabulary of analytic families (constant,
affine, sinusoidal) plus piecewise-constant tables in time; nonlinear maps are
sums of bounded/affine terms in the state argument, optionally modulated in
time.  Everything is immutable once validated.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Any, Callable, Sequence

import numpy as np
from scipy.stats import qmc

FD_STEP = 1e-5
DEFAULT_DOMAIN = (-5.0, 5.0)


class ConfigError(ValueError):
    """Config text could not be parsed."""


class SpecValidationError(ValueError):
    """A loaded spec violates one of its invariants."""


# --------------------------------------------------------------------------
# grids
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class TimeGrid:
    T: float
    M: int
    t0: float = 0.0

    def __post_init__(self):
        if not (self.T > 0 and math.isfinite(self.T)):
            raise ValueError(f"horizon T must be positive, got {self.T}")
        if int(self.M) != self.M or self.M < 2:
            raise ValueError(f"step count M must be an integer >= 2, got {self.M}")
        if self.t0 != 0.0:
            raise ValueError("time grids start at t0 = 0")

    @classmethod
    def from_step(cls, T: float, dt: float) -> "TimeGrid":
        M = int(round(T / dt))
        if M < 2 or not math.isclose(M * dt, T, rel_tol=1e-9):
            raise ValueError(f"dt={dt} does not divide T={T} into >= 2 steps")
        return cls(T=T, M=M)

    @property
    def dt(self) -> float:
        return self.T / self.M

    @property
    def nodes(self) -> np.ndarray:
        return np.arange(self.M + 1) * self.dt

    def index(self, t: float) -> int:
        """Index of node ``t``; raises if ``t`` is not (numerically) a node."""
        k = int(round(t / self.dt))
        if k < 0 or k > self.M or abs(k * self.dt - t) > 1e-9 * max(1.0, self.T):
            raise ValueError(f"t={t} is not a node of {self}")
        return k


@dataclass(frozen=True)
class SpaceGrid:
    nu_min: float
    nu_max: float
    dnu: float

    def __post_init__(self):
        if not self.nu_min < self.nu_max:
            raise ValueError("space grid needs nu_min < nu_max")
        if not self.dnu > 0:
            raise ValueError("space step must be positive")

    @property
    def N(self) -> int:
        # number of intervals; the step is adjusted so they tile the domain
        return max(2, int(round((self.nu_max - self.nu_min) / self.dnu)))

    @property
    def step(self) -> float:
        return (self.nu_max - self.nu_min) / self.N

    @property
    def nodes(self) -> np.ndarray:
        return self.nu_min + np.arange(self.N + 1) * self.step


@dataclass(frozen=True)
class SimConfig:
    particles: int = 10_000
    paths: int = 1
    seed: int = 20240611
    nu_min: float = DEFAULT_DOMAIN[0]
    nu_max: float = DEFAULT_DOMAIN[1]
    dnu: float = 1e-2
    dt: float = 1e-3
    xi_mean: float = 0.0
    xi_std: float = 0.5
    tolerances: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.particles < 1:
            raise ValueError("particle count must be >= 1")
        if self.paths < 1:
            raise ValueError("path count must be >= 1")
        if not self.nu_min < self.nu_max:
            raise ValueError("nu_min must be < nu_max")
        if not self.dnu > 0 or not self.dt > 0:
            raise ValueError("steps must be positive")

    @property
    def space(self) -> SpaceGrid:
        return SpaceGrid(self.nu_min, self.nu_max, self.dnu)

    def to_dict(self) -> dict:
        return {
            "particles": self.particles, "paths": self.paths, "seed": self.seed,
            "nu_min": self.nu_min, "nu_max": self.nu_max, "dnu": self.dnu,
            "dt": self.dt, "xi_mean": self.xi_mean, "xi_std": self.xi_std,
            "tolerances": dict(self.tolerances),
        }


# --------------------------------------------------------------------------
# coefficients
# --------------------------------------------------------------------------

_SCALAR_KEYS = {
    "constant": {"value"},
    "affine": {"a", "b"},
    "sin": {"a", "b", "omega", "phase"},
    "table": {"values", "T"},
}


@dataclass(frozen=True)
class ScalarCoefficient:
    """Deterministic bounded function of time."""

    family: str
    params: tuple = ()

    def __post_init__(self):
        if self.family not in _SCALAR_KEYS:
            raise SpecValidationError(f"unknown time-coefficient family {self.family!r}")
        object.__setattr__(self, "_p", dict(self.params))

    @classmethod
    def constant(cls, value: float) -> "ScalarCoefficient":
        return cls("constant", (("value", float(value)),))

    @classmethod
    def from_config(cls, cfg: Any) -> "ScalarCoefficient":
        if isinstance(cfg, (int, float)) and not isinstance(cfg, bool):
            return cls.constant(cfg)
        if not isinstance(cfg, dict) or "family" not in cfg:
            raise SpecValidationError(f"bad time coefficient {cfg!r}")
        fam = cfg["family"]
        if fam not in _SCALAR_KEYS:
            raise SpecValidationError(f"unknown time-coefficient family {fam!r}")
        extra = set(cfg) - _SCALAR_KEYS[fam] - {"family"}
        if extra:
            raise SpecValidationError(f"unknown keys {sorted(extra)} in {fam} coefficient")
        defaults = {"phase": 0.0, "omega": 1.0}
        params = []
        for key in sorted(_SCALAR_KEYS[fam]):
            if key not in cfg and key not in defaults:
                raise SpecValidationError(f"{fam} coefficient missing {key!r}")
            val = cfg.get(key, defaults.get(key))
            if key == "values":
                val = tuple(float(v) for v in val)
                if not val:
                    raise SpecValidationError("table coefficient needs values")
            else:
                val = float(val)
            params.append((key, val))
        return cls(fam, tuple(params))

    @property
    def p(self) -> dict:
        return dict(self.params)

    def __call__(self, t):
        p = self._p
        if self.family == "constant" and isinstance(t, (float, int)):
            return float(p["value"])
        t = np.asarray(t, dtype=float)
        if self.family == "constant":
            out = np.full_like(t, p["value"])
        elif self.family == "affine":
            out = p["a"] + p["b"] * t
        elif self.family == "sin":
            out = p["a"] + p["b"] * np.sin(p["omega"] * t + p["phase"])
        else:
            vals = np.asarray(p["values"])
            m = len(vals)
            # piecewise constant on [k h, (k+1) h), last cell closed at T
            k = np.clip(np.floor(t / p["T"] * m + 1e-12).astype(int), 0, m - 1)
            out = vals[k]
        return float(out) if out.ndim == 0 else out

    def bound(self, T: float) -> float:
        p = self.p
        if self.family == "constant":
            return abs(p["value"])
        if self.family == "affine":
            return max(abs(p["a"]), abs(p["a"] + p["b"] * T))
        if self.family == "sin":
            return abs(p["a"]) + abs(p["b"])
        return float(np.max(np.abs(p["values"])))

    def to_dict(self) -> dict:
        out = {"family": self.family}
        for k, v in self.params:
            out[k] = list(v) if isinstance(v, tuple) else v
        return out


_TERM_KEYS = {
    "zero": set(),
    "constant": {"c"},
    "linear": {"c"},
    "affine": {"a", "c"},
    "tanh": {"amp", "scale", "shift"},
    "sin": {"amp", "scale", "shift"},
}
_TERM_DEFAULTS = {"scale": 1.0, "shift": 0.0}


@dataclass(frozen=True)
class _Term:
    family: str
    params: tuple
    time: ScalarCoefficient | None = None

    def __post_init__(self):
        object.__setattr__(self, "_p", dict(self.params))

    def part(self, x, order: int):
        """Value (order 0) or x-derivative (order 1, 2) of the x-profile."""
        p = self._p
        x = np.asarray(x, dtype=float)
        fam = self.family
        if fam == "zero" or (order >= 1 and fam == "constant") or (order == 2 and fam in ("linear", "affine")):
            return np.zeros_like(x)
        if fam == "constant":
            return np.full_like(x, p["c"])
        if fam in ("linear", "affine"):
            if order == 1:
                return np.full_like(x, p["c"])
            return p.get("a", 0.0) + p["c"] * x
        u = p["scale"] * x + p["shift"]
        a, s = p["amp"], p["scale"]
        if fam == "tanh":
            th = np.tanh(u)
            if order == 0:
                return a * th
            sech2 = 1.0 - th * th
            return a * s * sech2 if order == 1 else -2.0 * a * s * s * th * sech2
        if order == 0:
            return a * np.sin(u)
        return a * s * np.cos(u) if order == 1 else -a * s * s * np.sin(u)

    def parts(self, x):
        """Value, first and second x-derivative of the x-profile."""
        return tuple(self.part(x, k) for k in range(3))

    def to_dict(self) -> dict:
        out = {"family": self.family, **dict(self.params)}
        if self.time is not None:
            out["time"] = self.time.to_dict()
        return out


def _parse_term(cfg: dict) -> _Term:
    if not isinstance(cfg, dict) or "family" not in cfg:
        raise SpecValidationError(f"bad map term {cfg!r}")
    fam = cfg["family"]
    if fam not in _TERM_KEYS:
        raise SpecValidationError(f"unknown map family {fam!r}")
    extra = set(cfg) - _TERM_KEYS[fam] - {"family", "time"}
    if extra:
        raise SpecValidationError(f"unknown keys {sorted(extra)} in {fam} map")
    params = []
    for key in sorted(_TERM_KEYS[fam]):
        if key not in cfg and key not in _TERM_DEFAULTS:
            raise SpecValidationError(f"{fam} map missing {key!r}")
        params.append((key, float(cfg.get(key, _TERM_DEFAULTS.get(key)))))
    time = ScalarCoefficient.from_config(cfg["time"]) if "time" in cfg else None
    return _Term(fam, tuple(params), time)


class NonlinearMap:
    """Map (t, x) -> R with first and second x-derivatives.

    Built either from analytic terms (exact derivatives, serializable) or from
    a callable, in which case missing derivatives fall back to central
    differences with step ``FD_STEP``.
    """

    def __init__(self, terms: Sequence[_Term] = (), fn: Callable | None = None,
                 d1: Callable | None = None, d2: Callable | None = None):
        self._terms = tuple(terms)
        self._fn, self._d1, self._d2 = fn, d1, d2

    # construction -------------------------------------------------------
    @classmethod
    def zero(cls) -> "NonlinearMap":
        return cls((_Term("zero", ()),))

    @classmethod
    def from_config(cls, cfg: Any) -> "NonlinearMap":
        if isinstance(cfg, dict) and "sum" in cfg:
            if set(cfg) != {"sum"}:
                raise SpecValidationError(f"unknown keys next to 'sum': {sorted(set(cfg) - {'sum'})}")
            return cls(tuple(_parse_term(c) for c in cfg["sum"]))
        return cls((_parse_term(cfg),))

    @classmethod
    def from_callable(cls, fn, d1=None, d2=None) -> "NonlinearMap":
        return cls(fn=fn, d1=d1, d2=d2)

    @property
    def serializable(self) -> bool:
        return self._fn is None

    @property
    def time_dependent(self) -> bool:
        return self._fn is not None or any(term.time is not None for term in self._terms)

    def to_dict(self) -> dict:
        if not self.serializable:
            raise TypeError("callable-backed maps cannot be serialized")
        if len(self._terms) == 1:
            return self._terms[0].to_dict()
        return {"sum": [term.to_dict() for term in self._terms]}

    # evaluation ---------------------------------------------------------
    def _eval(self, t, x, order: int):
        x = np.asarray(x, dtype=float)
        out = None
        for term in self._terms:
            val = term.part(x, order)
            if term.time is not None:
                val = term.time(t) * val
            out = val if out is None else out + val
        if np.ndim(t) == 0 or np.shape(t) == out.shape:
            return out
        return np.broadcast_to(out, np.broadcast_shapes(np.shape(t), x.shape)).copy()

    def __call__(self, t, x):
        if self._fn is not None:
            return np.asarray(self._fn(t, x), dtype=float)
        return self._eval(t, x, 0)

    def d1(self, t, x):
        if self._fn is not None:
            if self._d1 is not None:
                return np.asarray(self._d1(t, x), dtype=float)
            x = np.asarray(x, dtype=float)
            return (self(t, x + FD_STEP) - self(t, x - FD_STEP)) / (2 * FD_STEP)
        return self._eval(t, x, 1)

    def d2(self, t, x):
        if self._fn is not None:
            if self._d2 is not None:
                return np.asarray(self._d2(t, x), dtype=float)
            x = np.asarray(x, dtype=float)
            if self._d1 is not None:
                return (self.d1(t, x + FD_STEP) - self.d1(t, x - FD_STEP)) / (2 * FD_STEP)
            h = 1e-4  # second differences need a larger step
            return (self(t, x + h) - 2 * self(t, x) + self(t, x - h)) / (h * h)
        return self._eval(t, x, 2)

    def slope_bound(self, T: float) -> float | None:
        """Analytic bound on |d/dx|, when available."""
        if self._fn is not None:
            return None
        total = 0.0
        for term in self._terms:
            p = dict(term.params)
            if term.family in ("linear", "affine"):
                s = abs(p["c"])
            elif term.family in ("tanh", "sin"):
                s = abs(p["amp"] * p["scale"])
            else:
                s = 0.0
            if term.time is not None:
                s *= term.time.bound(T)
            total += s
        return total

    def is_zero(self) -> bool:
        return self._fn is None and all(
            t.family == "zero" or (t.family in ("constant", "linear") and dict(t.params)["c"] == 0.0)
            for t in self._terms
        )

    def __repr__(self):
        if self.serializable:
            return f"NonlinearMap({self.to_dict()})"
        return "NonlinearMap(<callable>)"


# --------------------------------------------------------------------------
# LQ game data
# --------------------------------------------------------------------------

LQ_TIME_COEFS = ("A", "B", "Q", "R", "F")
LQ_MAPS = ("f", "b", "l", "h", "q", "g")


@dataclass(frozen=True)
class LQSpec:
    A: ScalarCoefficient
    B: ScalarCoefficient
    Q: ScalarCoefficient
    R: ScalarCoefficient
    F: ScalarCoefficient
    G: float
    sigma: np.ndarray
    sigma0: np.ndarray
    f: NonlinearMap
    b: NonlinearMap
    l: NonlinearMap
    h: NonlinearMap
    q: NonlinearMap
    g: NonlinearMap
    T: float = 1.0
    K: float = 10.0
    eps0: float = 0.5
    name: str = "lq"
    validation: dict = field(default_factory=dict)

    @property
    def d(self) -> int:
        return len(self.sigma)

    def coefficients(self, t) -> dict:
        return {k: getattr(self, k)(t) for k in LQ_TIME_COEFS}

    def to_dict(self) -> dict:
        out = {"kind": "lq", "name": self.name, "T": self.T, "K": self.K,
               "eps0": self.eps0, "G": self.G,
               "sigma": [float(s) for s in self.sigma],
               "sigma0": [float(s) for s in self.sigma0]}
        for k in LQ_TIME_COEFS:
            out[k] = getattr(self, k).to_dict()
        for k in LQ_MAPS:
            out[k] = getattr(self, k).to_dict()
        if self.validation:
            out["validation"] = dict(self.validation)
        return out


# --------------------------------------------------------------------------
# general conditional mean field FBSDE data
# --------------------------------------------------------------------------

def _const(value):
    value = np.array(value, dtype=float)
    return lambda t: value


@dataclass(frozen=True)
class GeneralSpec:
    """Coefficients of the general conditional mean field FBSDE.

    Time coefficients take a scalar time.  The coupling maps ``b0``, ``f0``,
    ``sigma0`` take ``(t, xbar, ybar)`` with ``xbar`` of shape ``S`` and
    ``ybar`` of shape ``S + (n,)`` and return shapes ``S``, ``S + (n,)``,
    ``S + (d,)``; ``h2`` maps shape ``S`` to ``S + (n,)``.
    """

    n: int
    d: int
    T: float
    b1: Callable
    b2: Callable
    f1: Callable
    f2: Callable
    sigma1: Callable
    sigma2: Callable
    sigma: Callable
    h1: np.ndarray
    b0: Callable
    f0: Callable
    sigma0: Callable
    h2: Callable
    K: float = 10.0
    name: str = "general"
    sources_fn: Callable | None = None
    degenerate: bool | None = None
    lq: LQSpec | None = None
    config: dict | None = None

    def sources(self, t, xbar, ybar):
        """``(b0, f0, sigma0)`` at one time; shares work between the three maps."""
        if self.sources_fn is not None:
            return self.sources_fn(t, xbar, ybar)
        return self.b0(t, xbar, ybar), self.f0(t, xbar, ybar), self.sigma0(t, xbar, ybar)

    def is_common_noise_free(self, grid: TimeGrid | None = None) -> bool:
        """True when the conditional dynamics carry no common noise at all."""
        if self.degenerate is not None:
            return self.degenerate
        ts = (grid or TimeGrid(self.T, 20)).nodes
        xs = np.linspace(-3, 3, 7)
        ys = np.repeat(xs[:, None], self.n, axis=1)
        for t in ts:
            if np.any(self.sigma1(t)) or np.any(self.sigma2(t)):
                return False
            if np.any(self.sigma0(t, xs, ys)):
                return False
        return True

    def to_dict(self) -> dict:
        if self.config is None:
            raise TypeError("only config-backed general specs can be serialized")
        return dict(self.config)


# --------------------------------------------------------------------------
# loading and validation
# --------------------------------------------------------------------------

_LQ_KEYS = {"kind", "name", "T", "K", "eps0", "G", "sigma", "sigma0", "validation",
            *LQ_TIME_COEFS, *LQ_MAPS}
_GENERAL_KEYS = {"kind", "name", "T", "K", "n", "d", "b1", "b2", "f1", "f2", "sigma1",
                 "sigma2", "sigma", "h1", "b0", "f0", "sigma0", "h2", "validation"}
_VALIDATION_KEYS = {"nodes", "bounds", "samples", "seed"}
_SCENARIO_KEYS = {"sim", "checks"}


def _validation_opts(cfg: dict) -> dict:
    v = dict(cfg.get("validation", {}))
    extra = set(v) - _VALIDATION_KEYS
    if extra:
        raise SpecValidationError(f"unknown validation keys {sorted(extra)}")
    return {"nodes": int(v.get("nodes", 101)),
            "bounds": tuple(float(b) for b in v.get("bounds", DEFAULT_DOMAIN)),
            "samples": int(v.get("samples", 512)),
            "seed": int(v.get("seed", 0))}


def parse_config(text: str) -> dict:
    try:
        cfg = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"malformed config: {exc}") from exc
    if not isinstance(cfg, dict):
        raise ConfigError("config must be a JSON object")
    return cfg


def load_spec(config_text: str, validate: bool = True) -> LQSpec | GeneralSpec:
    """Parse and validate a spec from JSON text."""
    return spec_from_dict(parse_config(config_text), validate=validate)


def spec_from_dict(cfg: dict, validate: bool = True) -> LQSpec | GeneralSpec:
    """Build a spec; ``validate=False`` keeps structural checks only (used by reports)."""
    kind = cfg.get("kind", "lq")
    body = {k: v for k, v in cfg.items() if k not in _SCENARIO_KEYS}
    if kind == "lq":
        return _lq_from_dict(body, validate)
    if kind == "general":
        return _general_from_dict(body, validate)
    raise SpecValidationError(f"unknown spec kind {kind!r}")


def _require(cfg: dict, keys) -> None:
    missing = [k for k in keys if k not in cfg]
    if missing:
        raise SpecValidationError(f"missing required keys {missing}")


def _lq_from_dict(cfg: dict, validate: bool = True) -> LQSpec:
    extra = set(cfg) - _LQ_KEYS
    if extra:
        raise SpecValidationError(f"unknown keys {sorted(extra)}")
    _require(cfg, ("G", "sigma", "sigma0", *LQ_TIME_COEFS, *LQ_MAPS))
    opts = _validation_opts(cfg)
    coefs = {k: ScalarCoefficient.from_config(cfg[k]) for k in LQ_TIME_COEFS}
    maps = {k: NonlinearMap.from_config(cfg[k]) for k in LQ_MAPS}
    if maps["g"].time_dependent:
        raise SpecValidationError("g must not depend on time")
    sigma = np.atleast_1d(np.asarray(cfg["sigma"], dtype=float))
    sigma0 = np.atleast_1d(np.asarray(cfg["sigma0"], dtype=float))
    if sigma.ndim != 1 or sigma.shape != sigma0.shape:
        raise SpecValidationError("sigma and sigma0 must be vectors of equal length d")
    spec = LQSpec(**coefs, **maps, G=float(cfg["G"]), sigma=sigma, sigma0=sigma0,
                  T=float(cfg.get("T", 1.0)), K=float(cfg.get("K", 10.0)),
                  eps0=float(cfg.get("eps0", 0.5)), name=str(cfg.get("name", "lq")),
                  validation=dict(cfg.get("validation", {})))
    if validate:
        validate_lq(spec, **opts)
    return spec


def validate_lq(spec: LQSpec, nodes: int = 101, bounds=DEFAULT_DOMAIN,
                samples: int = 512, seed: int = 0) -> None:
    """Check (B1)-(B3) and the declared bounds; raise on the first violation."""
    if not spec.T > 0:
        raise SpecValidationError("horizon T must be positive")
    if not spec.eps0 > 0:
        raise SpecValidationError("eps0 must be positive")
    ts = np.linspace(0.0, spec.T, nodes)
    for name in LQ_TIME_COEFS:
        vals = np.asarray(getattr(spec, name)(ts))
        if not np.all(np.isfinite(vals)):
            raise SpecValidationError(f"{name}(t) is not finite on the grid")
        worst = int(np.argmax(np.abs(vals)))
        if abs(vals[worst]) > spec.K:
            raise SpecValidationError(f"|{name}(t)| <= K violated at t={ts[worst]:.6g}")
    R = spec.R(ts)
    if np.any(R <= 0):
        t_bad = ts[int(np.argmin(R))]
        raise SpecValidationError(f"R(t) > 0 violated at t={t_bad:.6g}")
    if not spec.G > 0:
        raise SpecValidationError(f"G > 0 violated (G={spec.G})")
    gap = spec.Q(ts) - spec.F(ts) ** 2 / R
    if np.any(gap < 0):
        t_bad = ts[int(np.argmin(gap))]
        raise SpecValidationError(f"Q(t) - F(t)^2/R(t) >= 0 violated at t={t_bad:.6g}")
    if abs(spec.G) > spec.K or np.any(np.abs(spec.sigma) > spec.K) or np.any(np.abs(spec.sigma0) > spec.K):
        raise SpecValidationError("constants G, sigma, sigma0 exceed K")

    pts = sample_domain([(0.0, spec.T), bounds], samples, seed=seed)
    t_s, x_s = pts[:, 0], pts[:, 1]
    for name in LQ_MAPS:
        m = getattr(spec, name)
        d1 = np.asarray(m.d1(t_s, x_s))
        if not np.all(np.isfinite(d1)):
            raise SpecValidationError(f"derivative of {name} is not finite")
        if np.max(np.abs(d1)) > spec.K:
            raise SpecValidationError(f"(B2) Lipschitz bound K violated by {name}")
        if np.max(np.abs(np.asarray(m.d2(t_s, x_s)))) > spec.K:
            raise SpecValidationError(f"(B4) second-derivative bound K violated by {name}")
    margin = np.abs(1.0 + np.asarray(spec.h.d1(t_s, x_s)))
    i = int(np.argmin(margin))
    if margin[i] < spec.eps0:
        raise SpecValidationError(
            f"(B3) margin violated: |1 + h'(t,x)| = {margin[i]:.3g} < eps0 = {spec.eps0} "
            f"at (t, x) = ({t_s[i]:.4g}, {x_s[i]:.4g})")


# general specs: coupling maps are additive across arguments ------------------

def _coupling_from_config(cfg: dict, n: int):
    """Build (t, xbar, ybar) -> R from {"x": map, "y": [map]*n}."""
    if not isinstance(cfg, dict):
        raise SpecValidationError(f"bad coupling map {cfg!r}")
    extra = set(cfg) - {"x", "y"}
    if extra:
        raise SpecValidationError(f"unknown keys {sorted(extra)} in coupling map")
    mx = NonlinearMap.from_config(cfg["x"]) if "x" in cfg else NonlinearMap.zero()
    ys = cfg.get("y", [])
    if len(ys) not in (0, n):
        raise SpecValidationError(f"coupling map needs {n} y-terms")
    my = [NonlinearMap.from_config(c) for c in ys]

    def fn(t, xbar, ybar):
        xbar = np.asarray(xbar, dtype=float)
        out = np.asarray(mx(t, xbar), dtype=float) + 0.0 * xbar
        ybar = np.asarray(ybar, dtype=float)
        for j, m in enumerate(my):
            out = out + m(t, ybar[..., j])
        return out

    return fn, mx, my


def _general_from_dict(cfg: dict, validate: bool = True) -> GeneralSpec:
    extra = set(cfg) - _GENERAL_KEYS
    if extra:
        raise SpecValidationError(f"unknown keys {sorted(extra)}")
    _require(cfg, ("n", "d", "b1", "b2", "f1", "f2", "sigma1", "sigma2", "sigma",
                   "h1", "b0", "f0", "sigma0", "h2"))
    n, d = int(cfg["n"]), int(cfg["d"])
    T = float(cfg.get("T", 1.0))
    K = float(cfg.get("K", 10.0))
    if n < 1 or d < 1:
        raise SpecValidationError("n and d must be >= 1")

    def vec(key, length):
        items = cfg[key]
        if not isinstance(items, list) or len(items) != length:
            raise SpecValidationError(f"{key} must be a list of length {length}")
        return [ScalarCoefficient.from_config(c) for c in items]

    def mat(key, rows, cols):
        items = cfg[key]
        if not isinstance(items, list) or len(items) != rows:
            raise SpecValidationError(f"{key} must be a {rows}x{cols} nested list")
        return [vec_row(key, r, cols) for r in items]

    def vec_row(key, row, cols):
        if not isinstance(row, list) or len(row) != cols:
            raise SpecValidationError(f"{key} must be a nested list with rows of length {cols}")
        return [ScalarCoefficient.from_config(c) for c in row]

    b1 = ScalarCoefficient.from_config(cfg["b1"])
    b2, f1, sigma1, sigma = vec("b2", n), vec("f1", n), vec("sigma1", d), vec("sigma", d)
    f2, sigma2 = mat("f2", n, n), mat("sigma2", n, d)
    h1 = np.asarray(cfg["h1"], dtype=float).reshape(-1)
    if h1.shape != (n,):
        raise SpecValidationError(f"h1 must have length {n}")
    b0_fn, *_ = _coupling_from_config(cfg["b0"], n)
    if not isinstance(cfg["f0"], list) or len(cfg["f0"]) != n:
        raise SpecValidationError(f"f0 must list {n} coupling maps")
    if not isinstance(cfg["sigma0"], list) or len(cfg["sigma0"]) != d:
        raise SpecValidationError(f"sigma0 must list {d} coupling maps")
    f0_fns = [_coupling_from_config(c, n)[0] for c in cfg["f0"]]
    s0_fns = [_coupling_from_config(c, n)[0] for c in cfg["sigma0"]]
    if not isinstance(cfg["h2"], list) or len(cfg["h2"]) != n:
        raise SpecValidationError(f"h2 must list {n} maps")
    h2_maps = [NonlinearMap.from_config(c) for c in cfg["h2"]]
    if any(m.time_dependent for m in h2_maps):
        raise SpecValidationError("h2 must not depend on time")

    def f0(t, x, y):
        return np.stack([fn(t, x, y) for fn in f0_fns], axis=-1)

    def s0(t, x, y):
        return np.stack([fn(t, x, y) for fn in s0_fns], axis=-1)

    def h2(x):
        x = np.asarray(x, dtype=float)
        return np.stack([m(0.0, x) for m in h2_maps], axis=-1)

    gs = GeneralSpec(
        n=n, d=d, T=T, K=K, name=str(cfg.get("name", "general")),
        b1=lambda t: float(b1(t)),
        b2=lambda t: np.array([c(t) for c in b2], dtype=float),
        f1=lambda t: np.array([c(t) for c in f1], dtype=float),
        f2=lambda t: np.array([[c(t) for c in row] for row in f2], dtype=float),
        sigma1=lambda t: np.array([c(t) for c in sigma1], dtype=float),
        sigma2=lambda t: np.array([[c(t) for c in row] for row in sigma2], dtype=float),
        sigma=lambda t: np.array([c(t) for c in sigma], dtype=float),
        h1=h1, b0=b0_fn, f0=f0, sigma0=s0, h2=h2,
        config=_canonical_general(cfg),
    )
    opts = _validation_opts(cfg)
    if validate:
        validate_general(gs, **opts)
    return gs


def _canonical_general(cfg: dict) -> dict:
    # re-serialize every coefficient through its parsed form
    def coef(c):
        return ScalarCoefficient.from_config(c).to_dict()

    def coupling(c):
        out = {}
        if "x" in c:
            out["x"] = NonlinearMap.from_config(c["x"]).to_dict()
        if "y" in c:
            out["y"] = [NonlinearMap.from_config(m).to_dict() for m in c["y"]]
        return out

    out = {"kind": "general", "name": str(cfg.get("name", "general")),
           "T": float(cfg.get("T", 1.0)), "K": float(cfg.get("K", 10.0)),
           "n": int(cfg["n"]), "d": int(cfg["d"]),
           "b1": coef(cfg["b1"]),
           "b2": [coef(c) for c in cfg["b2"]], "f1": [coef(c) for c in cfg["f1"]],
           "f2": [[coef(c) for c in r] for r in cfg["f2"]],
           "sigma1": [coef(c) for c in cfg["sigma1"]],
           "sigma2": [[coef(c) for c in r] for r in cfg["sigma2"]],
           "sigma": [coef(c) for c in cfg["sigma"]],
           "h1": [float(v) for v in np.asarray(cfg["h1"], dtype=float).reshape(-1)],
           "b0": coupling(cfg["b0"]),
           "f0": [coupling(c) for c in cfg["f0"]],
           "sigma0": [coupling(c) for c in cfg["sigma0"]],
           "h2": [NonlinearMap.from_config(m).to_dict() for m in cfg["h2"]]}
    if "validation" in cfg:
        out["validation"] = dict(cfg["validation"])
    return out


def validate_general(gs: GeneralSpec, nodes: int = 101, bounds=DEFAULT_DOMAIN,
                     samples: int = 512, seed: int = 0) -> None:
    """(A1)/(A4) checks: bounded coefficients and Lipschitz coupling on samples."""
    K = gs.K
    for t in np.linspace(0.0, gs.T, nodes):
        for name in ("b1", "b2", "f1", "f2", "sigma1", "sigma2", "sigma"):
            v = np.asarray(getattr(gs, name)(t))
            if not np.all(np.isfinite(v)) or np.max(np.abs(v)) > K:
                raise SpecValidationError(f"(A1) |{name}(t)| <= K violated at t={t:.6g}")
    if np.max(np.abs(gs.h1)) > K:
        raise SpecValidationError("(A1) |h1| <= K violated")
    lo, hi = bounds
    box = [(0.0, gs.T), (lo, hi)] + [(lo, hi)] * gs.n
    p1 = sample_domain(box, samples, seed=seed)
    p2 = sample_domain(box, samples, seed=seed + 1)
    t, x1, y1 = p1[:, 0], p1[:, 1], p1[:, 2:]
    x2, y2 = p2[:, 1], p2[:, 2:]
    dist = np.abs(x1 - x2) + np.sum(np.abs(y1 - y2), axis=-1)
    for name in ("b0", "f0", "sigma0"):
        fn = getattr(gs, name)
        v1 = np.asarray(fn(t, x1, y1))
        v2 = np.asarray(fn(t, x2, y2))
        if not (np.all(np.isfinite(v1)) and np.all(np.isfinite(v2))):
            raise SpecValidationError(f"(A1) {name} is not finite on samples")
        diff = np.abs(v1 - v2)
        if diff.ndim > 1:
            diff = np.linalg.norm(diff, axis=-1)
        if np.any(diff > K * dist * (1 + 1e-12) + 1e-12):
            raise SpecValidationError(f"(A1) Lipschitz bound K violated by {name}")
        v0 = np.asarray(fn(np.array([0.0]), np.zeros(1), np.zeros((1, gs.n))))
        if np.max(np.abs(v0)) > K:
            raise SpecValidationError(f"(A4) |{name}(t,0,0)| <= K violated")
    h_1, h_2 = gs.h2(x1), gs.h2(x2)
    if np.any(np.linalg.norm(h_1 - h_2, axis=-1) > K * np.abs(x1 - x2) + 1e-12):
        raise SpecValidationError("(A1) Lipschitz bound K violated by h2")


def dump_spec(spec: LQSpec | GeneralSpec) -> str:
    """Canonical JSON echo of a config-backed spec (sorted keys, exact floats)."""
    return json.dumps(spec.to_dict(), sort_keys=True, indent=1)


# --------------------------------------------------------------------------
# sampling
# --------------------------------------------------------------------------

def sample_domain(bounds: Sequence[tuple[float, float]], count: int, seed: int = 0) -> np.ndarray:
    """Deterministic scrambled-Halton sample of the box ``bounds``.

    Returns an array of shape ``(count, len(bounds))``; a single sample is the
    box centre.
    """
    if count < 1:
        raise ValueError("count must be >= 1")
    b = np.asarray(bounds, dtype=float)
    if b.ndim != 2 or b.shape[1] != 2 or not np.all(np.isfinite(b)) or np.any(b[:, 0] > b[:, 1]):
        raise ValueError(f"degenerate bounds {bounds!r}")
    if count == 1:
        return (0.5 * (b[:, 0] + b[:, 1]))[None, :]
    u = qmc.Halton(d=len(b), scramble=True, seed=seed).random(count)
    return b[:, 0] + u * (b[:, 1] - b[:, 0])
