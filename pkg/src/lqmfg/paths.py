"""Monte Carlo simulation of the equilibrium under common noise.

One common path nu is simulated from the forward equation of the (nu, phi)
system; a cloud of particles shares its common increments and carries
independent idiosyncratic noise.  Random streams are counter-based (Philox)
and keyed by (seed, stream tag, path index), so every common path and every
particle cloud can be regenerated independently of the others.
"""
from __future__ import annotations

import csv
import json
import math
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .model import GeneralSpec, LQSpec
from .phi_field import MasterField, nu_coefficients
from .reduction import RhoMap, lq_to_general

COMMON, IDIO, XI = 0, 1, 2


class BoundaryWarning(UserWarning):
    pass


def rng_for(seed: int, tag: int, index: int = 0, *sub: int) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(np.random.SeedSequence([seed, tag, index, *sub])))


def common_increments(seed: int, path: int, steps: int, d: int, dt: float, factor: int = 1) -> np.ndarray:
    """Common increments for ``steps`` steps of size ``dt``.

    Each step is the sum of ``factor`` draws of size ``dt / factor``, so runs
    with different ``factor`` and the same ``steps * factor`` share one
    Brownian path.
    """
    fine = rng_for(seed, COMMON, path).standard_normal((steps * factor, d)) * math.sqrt(dt / factor)
    return fine.reshape(steps, factor, d).sum(axis=1)


class IdioStream:
    """Per-step idiosyncratic increments for a particle cloud."""

    def __init__(self, seed: int, path: int, particles: int, d: int, dt: float, factor: int = 1):
        self._rng = rng_for(seed, IDIO, path)
        self.particles, self.d, self.factor = particles, d, factor
        self._scale = math.sqrt(dt / factor)

    def next(self) -> np.ndarray:
        if self.factor == 1:
            return self._rng.standard_normal((self.particles, self.d)) * self._scale
        fine = self._rng.standard_normal((self.factor, self.particles, self.d)) * self._scale
        return fine.sum(axis=0)


@dataclass(frozen=True)
class NoiseDraw:
    """Common increments of one path plus the seeds that regenerate the rest."""

    dW0: np.ndarray                # (steps, d)
    dt: float
    seed: int
    path: int = 0
    idio_seed: int | None = None
    factor: int = 1

    @property
    def steps(self) -> int:
        return self.dW0.shape[0]

    @property
    def d(self) -> int:
        return self.dW0.shape[1]

    def idio(self, particles: int) -> IdioStream:
        s = self.seed if self.idio_seed is None else self.idio_seed
        return IdioStream(s, self.path, particles, self.d, self.dt, self.factor)

    def xi(self, particles: int, mean: float, std: float) -> np.ndarray:
        s = self.seed if self.idio_seed is None else self.idio_seed
        return mean + std * rng_for(s, XI, self.path).standard_normal(particles)

    def reseeded(self, idio_seed: int) -> "NoiseDraw":
        """Same common increments, fresh idiosyncratic streams."""
        return NoiseDraw(self.dW0, self.dt, self.seed, self.path, idio_seed, self.factor)


def make_noise(seed: int, T: float, steps: int, d: int, path: int = 0, factor: int = 1,
               t0: float = 0.0) -> NoiseDraw:
    dt = (T - t0) / steps
    return NoiseDraw(common_increments(seed, path, steps, d, dt, factor), dt, seed, path, None, factor)


# --------------------------------------------------------------------------
# the common path
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class NuPath:
    t: np.ndarray                  # (steps + 1,)
    nu: np.ndarray                 # (steps + 1,)
    phi: np.ndarray                # (steps + 1, n)
    P: np.ndarray                  # (steps + 1, n)
    diffusion: np.ndarray          # (steps + 1, d) diffusion vector of nu
    dphi_dnu: np.ndarray           # (steps + 1, n)
    field_index: np.ndarray        # field time index of every step
    reflections: int = 0
    flagged: bool = False

    @property
    def steps(self) -> int:
        return len(self.t) - 1

    @property
    def dt(self) -> float:
        return (self.t[-1] - self.t[0]) / self.steps

    @property
    def ybar(self) -> np.ndarray:
        return self.P * self.nu[:, None] + self.phi


def _field_indices(field: MasterField, t0: float, steps: int) -> np.ndarray:
    grid = field.grid
    k0 = grid.index(t0)
    span = grid.M - k0
    if span % steps:
        raise ValueError(f"{steps} steps do not align with the field grid ({span} steps from t0)")
    return k0 + np.arange(steps + 1) * (span // steps)


def simulate_nu_many(gs: GeneralSpec, field: MasterField, dW0s, t0: float = 0.0,
                     eta: float = 0.0, exit_tol: float = 0.01) -> list[NuPath]:
    """Euler-Maruyama for a batch of common paths, reflected at the domain boundary.

    ``dW0s`` has shape ``(paths, steps, d)``; the paths are advanced together.
    """
    dW0s = np.asarray(dW0s, dtype=float)
    B, steps, _ = dW0s.shape
    ks = _field_indices(field, t0, steps)
    sp = field.Phi.space
    if not sp.nu_min < eta < sp.nu_max:
        raise ValueError(f"eta={eta} outside the space domain")
    dt = (field.grid.T - t0) / steps
    n = gs.n
    t = t0 + np.arange(steps + 1) * dt
    nu = np.empty((steps + 1, B))
    phi = np.empty((steps + 1, B, n))
    dphi = np.empty((steps + 1, B, n))
    diff = np.empty((steps + 1, B, gs.d))
    P = field.P.P[ks]
    nu[0] = eta
    events = np.zeros(B, dtype=int)
    for i in range(steps + 1):
        k = ks[i]
        x = nu[i]
        phi[i] = field.Phi.at_node(k, x)
        dphi[i] = field.Phi.d_nu_at_node(k, x)
        drift, dv, _ = nu_coefficients(gs, t[i], P[i], x, phi[i])
        diff[i] = dv
        if i == steps:
            break
        nxt = x + drift * dt + np.einsum("bd,bd->b", dv, dW0s[:, i])
        hi, lo = nxt > sp.nu_max, nxt < sp.nu_min
        events += hi | lo
        nxt = np.where(hi, 2 * sp.nu_max - nxt, np.where(lo, 2 * sp.nu_min - nxt, nxt))
        nu[i + 1] = np.clip(nxt, sp.nu_min, sp.nu_max)
    out = []
    for b in range(B):
        flagged = bool(events[b] > exit_tol * steps)
        if flagged:
            warnings.warn(f"common path left [{sp.nu_min}, {sp.nu_max}] in {events[b]} of {steps} "
                          "steps; enlarge the space domain", BoundaryWarning, stacklevel=2)
        out.append(NuPath(t, nu[:, b].copy(), phi[:, b].copy(), P, diff[:, b].copy(),
                          dphi[:, b].copy(), ks, int(events[b]), flagged))
    return out


def simulate_nu(gs: GeneralSpec, field: MasterField, dW0: np.ndarray, t0: float = 0.0,
                eta: float = 0.0, exit_tol: float = 0.01) -> NuPath:
    """Euler-Maruyama for one common path from ``(t0, eta)``."""
    dW0 = np.asarray(dW0, dtype=float)
    return simulate_nu_many(gs, field, dW0[None], t0, eta, exit_tol)[0]


# --------------------------------------------------------------------------
# particles
# --------------------------------------------------------------------------

@dataclass
class PathBundle:
    nu: NuPath
    particles: int
    xbar_hat: np.ndarray           # (steps + 1,)
    ybar_hat: np.ndarray           # (steps + 1, n)
    Z: np.ndarray                  # (steps + 1, n, d), P sigma
    bsde_step_rms: float           # RMS of per-step residuals
    bsde_cum_rms: float            # RMS of cumulative residuals over steps
    terminal_gap: float            # max |Y_T - (h1 X_T + h2(nu_T))|
    X: np.ndarray | None = None    # (steps + 1, particles) when kept
    Y: np.ndarray | None = None    # (steps + 1, particles, n)
    Z0: np.ndarray | None = None   # (steps + 1, particles, n, d)
    seeds: dict = field(default_factory=dict)

    @property
    def t(self) -> np.ndarray:
        return self.nu.t


def simulate_particles(gs: GeneralSpec, field: MasterField, nu_path: NuPath, noise: NoiseDraw,
                       particles: int, xi: np.ndarray | None = None, xi_std: float = 0.5,
                       keep_paths: bool = False) -> PathBundle:
    """Particle cloud for the fixed FBSDE driven by the common path.

    Y = P X + Phi(t, nu_t) is the decoupling identity; Z and Z0 follow from it,
    with Gamma = dPhi/dnu * (diffusion of nu).  Tracks the discrete BSDE
    residual Y_{k+1} - Y_k + f dt - Z dW - Z0 dW0 along the way.
    """
    if noise.steps != nu_path.steps or not math.isclose(noise.dt, nu_path.dt):
        raise ValueError("noise and common path live on different grids")
    n, d = gs.n, gs.d
    steps, dt = nu_path.steps, nu_path.dt
    if xi is None:
        xi = noise.xi(particles, float(nu_path.nu[0]), xi_std)
    xi = np.asarray(xi, dtype=float)
    if xi.shape != (particles,):
        raise ValueError("need one initial value per particle")
    stream = noise.idio(particles)
    X = xi.copy()
    xbar = np.empty(steps + 1)
    ybar = np.empty((steps + 1, n))
    Zs = np.empty((steps + 1, n, d))
    keep = {}
    if keep_paths:
        keep = {"X": np.empty((steps + 1, particles)), "Y": np.empty((steps + 1, particles, n)),
                "Z0": np.empty((steps + 1, particles, n, d))}
    cum = np.zeros((particles, n))
    sq_step = 0.0
    sq_cum = 0.0
    t = nu_path.t
    Y = None
    for k in range(steps + 1):
        P, phi = nu_path.P[k], nu_path.phi[k]
        Y = P * X[:, None] + phi
        xbar[k] = X.mean()
        ybar[k] = Y.mean(axis=0)
        sig = gs.sigma(t[k])
        Zs[k] = np.outer(P, sig)
        if k == steps:
            if keep_paths:
                keep["X"][k], keep["Y"][k] = X, Y
            break
        nu_k = nu_path.nu[k:k + 1]
        yb = nu_path.ybar[k:k + 1]
        b0, f0, s0 = gs.sources(t[k], nu_k, yb)
        b0, f0, s0 = float(np.asarray(b0)[0]), np.asarray(f0)[0], np.asarray(s0)[0]
        common_x = gs.sigma1(t[k]) * X[:, None] + Y @ gs.sigma2(t[k]) + s0     # (Mp, d)
        gamma = np.outer(nu_path.dphi_dnu[k], nu_path.diffusion[k])            # (n, d)
        Z0 = P[None, :, None] * common_x[:, None, :] + gamma                    # (Mp, n, d)
        if keep_paths:
            keep["X"][k], keep["Y"][k], keep["Z0"][k] = X, Y, Z0
        dW = stream.next()
        dW0 = noise.dW0[k]
        X_next = X + (gs.b1(t[k]) * X + Y @ gs.b2(t[k]) + b0) * dt + dW @ sig + common_x @ dW0
        Y_next = nu_path.P[k + 1] * X_next[:, None] + nu_path.phi[k + 1]
        driver = gs.f1(t[k]) * X[:, None] + Y @ gs.f2(t[k]).T + f0
        r = Y_next - Y + driver * dt - (dW @ Zs[k].T) - np.einsum("pnd,d->pn", Z0, dW0)
        cum += r
        sq_step += float(np.sum(r * r))
        sq_cum += float(np.sum(cum * cum))
        X = X_next
    term = np.max(np.abs(Y - (gs.h1 * X[:, None] + gs.h2(np.full(1, nu_path.nu[-1]))[0])))
    denom = particles * steps * n
    return PathBundle(nu_path, particles, xbar, ybar, Zs, math.sqrt(sq_step / denom),
                      math.sqrt(sq_cum / denom), float(term), keep.get("X"), keep.get("Y"),
                      keep.get("Z0"), {"seed": noise.seed, "path": noise.path,
                                       "idio_seed": noise.idio_seed})


@dataclass(frozen=True)
class Moments:
    t: np.ndarray
    xbar: np.ndarray
    ybar: np.ndarray
    dev_x: np.ndarray              # xbar_hat - nu
    dev_y: np.ndarray              # ybar_hat - (P nu + Phi)

    def relative_max(self) -> tuple[float, float]:
        """max_t |dev| / (1 + |reference|) for X and Y."""
        ref_x = np.abs(self.xbar - self.dev_x)
        ref_y = np.abs(self.ybar - self.dev_y)
        rx = np.max(np.abs(self.dev_x) / (1 + ref_x))
        ry = np.max(np.abs(self.dev_y) / (1 + ref_y))
        return float(rx), float(ry)


def estimate_conditional_moments(bundle: PathBundle) -> Moments:
    if bundle.particles < 100:
        warnings.warn(f"only {bundle.particles} particles; conditional moments are noisy",
                      RuntimeWarning, stacklevel=2)
    nu = bundle.nu
    return Moments(nu.t, bundle.xbar_hat, bundle.ybar_hat,
                   bundle.xbar_hat - nu.nu, bundle.ybar_hat - nu.ybar)


def simulate_paths(gs: GeneralSpec, field: MasterField, *, seed: int, paths: int, particles: int,
                   steps: int | None = None, eta: float = 0.0, xi_std: float = 0.5,
                   threads: int = 1) -> list[PathBundle]:
    """Independent common paths, each with its own particle cloud."""
    steps = steps or field.grid.M

    def one(p):
        noise = make_noise(seed, field.grid.T, steps, gs.d, path=p)
        nu = simulate_nu(gs, field, noise.dW0, 0.0, eta)
        return simulate_particles(gs, field, nu, noise, particles, xi_std=xi_std)

    if threads <= 1 or paths == 1:
        return [one(p) for p in range(paths)]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(one, range(paths)))


# --------------------------------------------------------------------------
# LQ game: equilibrium control and costs
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class FeedbackRule:
    """alpha_k(x) = -B/R y - F/R x - h(t, mu_k) with y = P x + phi_k.

    Arrays are indexed by step first; a stacked rule carries a trailing
    ``(paths, 1)`` block so it acts on particle arrays of shape
    ``(paths, particles)``.
    """

    t: np.ndarray
    P: np.ndarray
    phi: np.ndarray
    B: np.ndarray
    R: np.ndarray
    F: np.ndarray
    h_mu: np.ndarray

    def y(self, k: int, x):
        return self.P[k] * x + self.phi[k]

    def __call__(self, k: int, x):
        return -self.B[k] / self.R[k] * self.y(k, x) - self.F[k] / self.R[k] * x - self.h_mu[k]

    @classmethod
    def stack(cls, rules: list["FeedbackRule"]) -> "FeedbackRule":
        def col(name):
            return np.stack([getattr(r, name) for r in rules], axis=1)[:, :, None]

        return cls(rules[0].t, *(col(k) for k in ("P", "phi", "B", "R", "F", "h_mu")))


def lq_equilibrium_inputs(lq: LQSpec, nu_path: NuPath) -> tuple[np.ndarray, FeedbackRule]:
    """Equilibrium control mean mu along the path and the optimal feedback."""
    t = nu_path.t
    ones = np.ones_like(t)
    B, R, F = (np.asarray(c(t), dtype=float) * ones for c in (lq.B, lq.R, lq.F))
    ybar = nu_path.ybar[:, 0]
    mu = RhoMap(lq.h, lq.eps0)(t, -B / R * ybar - F / R * nu_path.nu)
    h_mu = np.asarray(lq.h(t, mu), dtype=float)
    rule = FeedbackRule(t, nu_path.P[:, 0].copy(), nu_path.phi[:, 0].copy(), B, R, F, h_mu)
    return np.asarray(mu, dtype=float), rule


def control_mean_gap(lq: LQSpec, bundle: PathBundle, mu: np.ndarray) -> np.ndarray:
    """Particle average of alpha* minus mu, per step."""
    t = bundle.t
    B, R, F = lq.B(t), lq.R(t), lq.F(t)
    alpha_bar = -B / R * bundle.ybar_hat[:, 0] - F / R * bundle.xbar_hat - lq.h(t, mu)
    return alpha_bar - mu


PERTURBATIONS = ("constant", "sine", "x-proportional", "y-proportional", "bang")


def perturbed(rule: FeedbackRule, kind: str, delta: float):
    """alpha* + delta * beta for one of the test directions."""
    if kind not in PERTURBATIONS:
        raise ValueError(f"unknown perturbation {kind!r}")
    T0, T1 = rule.t[0], rule.t[-1]

    def beta(k, x):
        if kind == "constant":
            return np.ones_like(x)
        if kind == "sine":
            return np.full_like(x, math.sin(2 * math.pi * (rule.t[k] - T0) / (T1 - T0)))
        if kind == "x-proportional":
            return x
        if kind == "y-proportional":
            return rule.y(k, x)
        # bang: full push for the first half of the horizon, full pull after
        return np.full_like(x, 1.0 if rule.t[k] < 0.5 * (T0 + T1) else -1.0)

    def control(k, x):
        return rule(k, x) + delta * beta(k, x)

    return control


def cost_samples(lq: LQSpec, control, mus, nu_paths, noises, particles: int,
                 xi_std: float = 0.5, shift: float = 0.0) -> np.ndarray:
    """Realized costs, shape ``(paths, particles)``, against frozen (mu, nu) paths.

    ``mus``, ``nu_paths`` and ``noises`` are equal-length lists (one entry per
    common path; a single path may be passed bare).  ``control(k, x)`` acts on
    states of shape ``(paths, particles)``.  ``shift`` moves every initial
    state without touching the crowd.
    """
    if isinstance(nu_paths, NuPath):
        mus, nu_paths, noises = [mus], [nu_paths], [noises]
    t = nu_paths[0].t
    steps, dt = nu_paths[0].steps, nu_paths[0].dt
    if any(nz.steps != steps for nz in noises):
        raise ValueError("noise and common path live on different grids")
    nu = np.stack([p.nu for p in nu_paths], axis=1)                  # (steps + 1, paths)
    mu = np.stack([np.asarray(m, dtype=float) for m in mus], axis=1)
    ones = np.ones_like(t)
    A, B, Q, R, F = (np.asarray(c(t), dtype=float) * ones for c in (lq.A, lq.B, lq.Q, lq.R, lq.F))
    tt = t[:, None]
    fb = lq.f(tt, nu) + lq.b(tt, mu)
    l_nu, h_mu, q_mu = lq.l(tt, nu), lq.h(tt, mu), lq.q(tt, mu)
    sig, sig0 = np.asarray(lq.sigma), np.asarray(lq.sigma0)
    common = np.stack([nz.dW0 @ sig0 for nz in noises], axis=1)     # (steps, paths)
    streams = [nz.idio(particles) for nz in noises]
    x = np.stack([nz.xi(particles, float(p.nu[0]), xi_std) for nz, p in zip(noises, nu_paths)]) + shift
    run = np.zeros_like(x)
    for k in range(steps):
        a = control(k, x)
        run += (Q[k] * (x + l_nu[k][:, None]) ** 2 + R[k] * (a + h_mu[k][:, None]) ** 2
                + 2 * F[k] * x * (a + q_mu[k][:, None])) * dt
        dW = np.stack([s.next() for s in streams]) @ sig
        x = x + (A[k] * x + B[k] * a + fb[k][:, None]) * dt + dW + common[k][:, None]
    g_T = np.asarray(lq.g(t[-1], nu[-1]), dtype=float)[:, None]
    return 0.5 * (run + lq.G * (x + g_T) ** 2)


@dataclass(frozen=True)
class CostEstimate:
    mean: float
    se: float
    count: int

    def to_dict(self) -> dict:
        return {"mean": self.mean, "se": self.se, "count": self.count}


def _estimate(samples) -> CostEstimate:
    """Mean and CLT standard error; a 2-d input is treated as (paths, particles)
    and the error is taken across path means when there are several paths."""
    samples = np.asarray(samples, dtype=float)
    if samples.ndim == 2 and samples.shape[0] > 1:
        samples = samples.mean(axis=1)
    samples = samples.ravel()
    se = float(samples.std(ddof=1) / math.sqrt(len(samples))) if len(samples) > 1 else math.inf
    return CostEstimate(float(samples.mean()), se, len(samples))


def evaluate_cost(lq: LQSpec, control, mus, nu_paths, noises, particles: int,
                  xi_std: float = 0.5) -> CostEstimate:
    """Monte Carlo cost with left-endpoint quadrature and its CLT standard error."""
    return _estimate(cost_samples(lq, control, mus, nu_paths, noises, particles, xi_std))


@dataclass(frozen=True)
class GapResult:
    kind: str
    delta: float
    base: CostEstimate
    perturbed: CostEstimate
    diff: float
    se: float

    @property
    def passed(self) -> bool:
        return self.diff >= -2 * self.se

    def to_dict(self) -> dict:
        return {"kind": self.kind, "delta": self.delta, "base": self.base.to_dict(),
                "perturbed": self.perturbed.to_dict(), "diff": self.diff, "se": self.se,
                "passed": self.passed}


def optimality_gaps(lq: LQSpec, field: MasterField, *, seed: int, paths: int, particles: int,
                    delta: float = 0.1, kinds=PERTURBATIONS, steps: int | None = None,
                    eta: float = 0.0, xi_std: float = 0.5) -> list[GapResult]:
    """Paired (common random numbers) cost differences J(alpha* + delta beta) - J(alpha*).

    The equilibrium is only optimal on average over the common noise, so the
    comparison runs over ``paths`` independent common paths and the standard
    error is taken across them.
    """
    gs_d = len(lq.sigma)
    steps = steps or field.grid.M
    noises = [make_noise(seed, field.grid.T, steps, gs_d, path=p) for p in range(paths)]
    nus = simulate_nu_many(lq_to_general(lq), field, np.stack([nz.dW0 for nz in noises]), 0.0, eta)
    inputs = [lq_equilibrium_inputs(lq, p) for p in nus]
    mus = [m for m, _ in inputs]
    rule = FeedbackRule.stack([r for _, r in inputs])
    base = cost_samples(lq, rule, mus, nus, noises, particles, xi_std)
    out = []
    for kind in kinds:
        pert = cost_samples(lq, perturbed(rule, kind, delta), mus, nus, noises, particles, xi_std)
        d = _estimate(pert - base)
        out.append(GapResult(kind, delta, _estimate(base), _estimate(pert), d.mean, d.se))
    return out


@dataclass(frozen=True)
class ValueSlope:
    x: float
    slope: float
    se: float
    decoupling: float

    def to_dict(self) -> dict:
        return {"x": self.x, "slope": self.slope, "se": self.se, "decoupling": self.decoupling}


def value_slopes(lq: LQSpec, field: MasterField, *, seed: int, paths: int, particles: int,
                 points=(-1.0, 0.0, 1.0), bump: float = 0.05, steps: int | None = None,
                 eta: float = 0.0) -> list[ValueSlope]:
    """Exploratory: central-difference x-slope of the Monte Carlo value at t = 0 next to P x + Phi.

    The crowd stays at the equilibrium started from ``eta``; a single player
    starts at ``x +- bump`` under the optimal feedback, with common random
    numbers between the two starts.  Nothing is asserted about the result.
    """
    steps = steps or field.grid.M
    noises = [make_noise(seed, field.grid.T, steps, len(lq.sigma), path=p) for p in range(paths)]
    nus = simulate_nu_many(lq_to_general(lq), field, np.stack([nz.dW0 for nz in noises]), 0.0, eta)
    inputs = [lq_equilibrium_inputs(lq, p) for p in nus]
    mus = [m for m, _ in inputs]
    rule = FeedbackRule.stack([r for _, r in inputs])
    phi0 = float(field.Phi(0.0, np.array([eta]))[0, 0])
    out = []
    for x in points:
        up, dn = (cost_samples(lq, rule, mus, nus, noises, particles, 0.0, x - eta + s * bump)
                  for s in (1.0, -1.0))
        per_path = (up - dn).mean(axis=1) / (2 * bump)
        se = float(per_path.std(ddof=1) / math.sqrt(paths)) if paths > 1 else math.nan
        out.append(ValueSlope(float(x), float(per_path.mean()), se, float(field.P.P[0, 0]) * x + phi0))
    return out


# --------------------------------------------------------------------------
# outputs
# --------------------------------------------------------------------------

def write_path_csv(path, bundle: PathBundle, mu: np.ndarray | None, meta: str) -> None:
    nu = bundle.nu
    with open(path, "w", newline="") as fh:
        fh.write(f"# {meta}\n")
        w = csv.writer(fh)
        n = bundle.ybar_hat.shape[1]
        ycols = ["mean_Y"] if n == 1 else [f"mean_Y{i + 1}" for i in range(n)]
        w.writerow(["t", "nu", "mu", "mean_X", *ycols])
        for k in range(nu.steps + 1):
            m = "" if mu is None else f"{mu[k]:.17g}"
            w.writerow([f"{nu.t[k]:.17g}", f"{nu.nu[k]:.17g}", m, f"{bundle.xbar_hat[k]:.17g}",
                        *(f"{v:.17g}" for v in bundle.ybar_hat[k])])


def write_cost_json(path, gaps: list[GapResult], seeds: dict) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump({"seeds": seeds, "gaps": [g.to_dict() for g in gaps]}, fh, sort_keys=True, indent=1)
