"""Reference solvers for the case without common noise.

When sigma1 = sigma2 = 0 and sigma0 = 0 the conditional dynamics are
deterministic, and (nu, phi) solve a two-point boundary value problem:

    nu'  = (b1 + b2 . P) nu + b2 . phi + b0(t, nu, P nu + phi),   nu(t0) = eta
    phi' = -[(b2 . phi) P + f2 phi + f0(t, nu, P nu + phi) + P b0],  phi(T) = h2(nu(T))

Two independent routes are provided: Newton shooting on phi(t0) and Picard
iteration on the mean-field map.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.integrate import solve_ivp
from scipy.interpolate import CubicSpline

from .model import GeneralSpec
from .riccati import riccati_rhs


class ShootingError(RuntimeError):
    pass


class PicardError(RuntimeError):
    def __init__(self, msg: str, history: list[float]):
        super().__init__(msg)
        self.history = history


def _require_degenerate(gs: GeneralSpec) -> None:
    if not gs.is_common_noise_free():
        raise ValueError(f"scenario {gs.name!r} has common noise; the oracle needs sigma1 = sigma2 = sigma0 = 0")


def riccati_fine(gs: GeneralSpec, t0: float, steps: int) -> np.ndarray:
    """P on the half-step lattice of [t0, T] with ``steps`` full steps (RK4, step h/2)."""
    half = 2 * steps
    h = (gs.T - t0) / half
    P = np.empty((half + 1, gs.n))
    P[half] = gs.h1
    for k in range(half, 0, -1):
        t = t0 + k * h
        p = P[k]
        k1 = riccati_rhs(gs, t, p)
        k2 = riccati_rhs(gs, t - h / 2, p - h / 2 * k1)
        k3 = riccati_rhs(gs, t - h / 2, p - h / 2 * k2)
        k4 = riccati_rhs(gs, t - h, p - h * k3)
        P[k - 1] = p - h / 6 * (k1 + 2 * k2 + 2 * k3 + k4)
    return P


def _rhs(gs: GeneralSpec, t: float, P: np.ndarray, nu: np.ndarray, phi: np.ndarray):
    """Vectorized (nu', phi') for a batch: nu shape (B,), phi shape (B, n)."""
    b2, f2 = gs.b2(t), gs.f2(t)
    ybar = P * nu[:, None] + phi
    b0, f0, _ = gs.sources(t, nu, ybar)
    b0 = np.asarray(b0, dtype=float)
    dnu = (gs.b1(t) + b2 @ P) * nu + phi @ b2 + b0
    dphi = -((phi @ b2)[:, None] * P + phi @ f2.T + f0 + P * b0[:, None])
    return dnu, dphi


def _rk4_forward(gs: GeneralSpec, t0: float, Pf: np.ndarray, steps: int, nu0, phi0):
    h = (gs.T - t0) / steps
    B = len(nu0)
    nu = np.empty((steps + 1, B))
    phi = np.empty((steps + 1, B, gs.n))
    nu[0], phi[0] = nu0, phi0
    for k in range(steps):
        t = t0 + k * h
        Pa, Pm, Pb = Pf[2 * k], Pf[2 * k + 1], Pf[2 * k + 2]
        x, y = nu[k], phi[k]
        a1, c1 = _rhs(gs, t, Pa, x, y)
        a2, c2 = _rhs(gs, t + h / 2, Pm, x + h / 2 * a1, y + h / 2 * c1)
        a3, c3 = _rhs(gs, t + h / 2, Pm, x + h / 2 * a2, y + h / 2 * c2)
        a4, c4 = _rhs(gs, t + h, Pb, x + h * a3, y + h * c3)
        nu[k + 1] = x + h / 6 * (a1 + 2 * a2 + 2 * a3 + a4)
        phi[k + 1] = y + h / 6 * (c1 + 2 * c2 + 2 * c3 + c4)
    return nu, phi


@dataclass(frozen=True)
class TPBVPSolution:
    t: np.ndarray                  # (K + 1,)
    nu: np.ndarray                 # (K + 1,)
    phi: np.ndarray                # (K + 1, n)
    P: np.ndarray                  # (K + 1, n)
    mismatch: float
    iterations: int
    integrator: str = "rk4"

    @property
    def phi0(self) -> np.ndarray:
        return self.phi[0]

    @property
    def ybar(self) -> np.ndarray:
        return self.P * self.nu[:, None] + self.phi


def _shoot_rk4(gs, t0, etas, steps, tol, max_iter, restarts, seed):
    Pf = riccati_fine(gs, t0, steps)
    n = gs.n
    B = len(etas)
    fd = 1e-7
    rng = np.random.default_rng(seed)
    guess = np.asarray(gs.h2(etas), dtype=float).reshape(B, n)
    pending = np.ones(B, dtype=bool)
    iters = np.zeros(B, dtype=int)
    result = guess.copy()
    for attempt in range(restarts + 1):
        phi0 = guess.copy()
        for it in range(max_iter):
            idx = np.flatnonzero(pending)
            if idx.size == 0:
                break
            # base shot plus one perturbed shot per component, in one batch
            nu0 = np.repeat(etas[idx], n + 1)
            y0 = np.repeat(phi0[idx], n + 1, axis=0)
            for j in range(n):
                y0[j + 1::n + 1, j] += fd
            nu, phi = _rk4_forward(gs, t0, Pf, steps, nu0, y0)
            miss = (phi[-1] - gs.h2(nu[-1])).reshape(len(idx), n + 1, n)
            base = miss[:, 0]
            err = np.max(np.abs(base), axis=1)
            done = err <= tol
            for a, i in enumerate(idx):
                iters[i] += 1
                if done[a]:
                    pending[i] = False
                    result[i] = phi0[i]
                    continue
                J = (miss[a, 1:] - base[a]).T / fd          # d mismatch / d phi0
                try:
                    phi0[i] = phi0[i] - np.linalg.solve(J, base[a])
                except np.linalg.LinAlgError:
                    phi0[i] = phi0[i] + rng.normal(size=n)
        if not pending.any():
            return result, Pf, iters
        guess = np.where(pending[:, None], guess + rng.normal(scale=1.0, size=guess.shape), guess)
    raise ShootingError(f"Newton shooting did not reach mismatch {tol:g} after {restarts} restarts")


def shoot_tpbvp(gs: GeneralSpec, t0: float, eta, *, steps: int = 1_000, tol: float = 1e-10,
                max_iter: int = 50, restarts: int = 10, seed: int = 0,
                integrator: str = "rk4") -> TPBVPSolution | list[TPBVPSolution]:
    """Newton shooting on phi(t0) for one ``eta`` or a sequence of them.

    ``integrator="rk4"`` uses a fixed-step RK4 with ``steps`` steps and its own
    half-step Riccati solve; ``"rk45"`` integrates the joint (P, nu, phi)
    system adaptively and is used to cross-check the first route.
    """
    _require_degenerate(gs)
    scalar = np.ndim(eta) == 0
    etas = np.atleast_1d(np.asarray(eta, dtype=float))
    if integrator == "rk45":
        sols = [_shoot_rk45(gs, t0, float(e), tol) for e in etas]
        return sols[0] if scalar else sols
    if integrator != "rk4":
        raise ValueError(f"unknown integrator {integrator!r}")
    phi0, Pf, iters = _shoot_rk4(gs, t0, etas, steps, tol, max_iter, restarts, seed)
    nu, phi = _rk4_forward(gs, t0, Pf, steps, etas, phi0)
    miss = np.max(np.abs(phi[-1] - gs.h2(nu[-1])), axis=1)
    t = t0 + np.arange(steps + 1) * (gs.T - t0) / steps
    sols = [TPBVPSolution(t, nu[:, b], phi[:, b], Pf[::2], float(miss[b]), int(iters[b]))
            for b in range(len(etas))]
    return sols[0] if scalar else sols


def _shoot_rk45(gs: GeneralSpec, t0: float, eta: float, tol: float) -> TPBVPSolution:
    n = gs.n
    opts = {"method": "RK45", "rtol": 1e-12, "atol": 1e-13}
    back = solve_ivp(lambda t, p: riccati_rhs(gs, t, p), (gs.T, t0), gs.h1, dense_output=True, **opts)
    Pt = back.sol

    def rhs(t, s):
        P = Pt(t)
        dnu, dphi = _rhs(gs, t, P, s[:1], s[None, 1:])
        return np.concatenate([dnu, dphi[0]])

    def miss(phi0):
        sol = solve_ivp(rhs, (t0, gs.T), np.concatenate([[eta], phi0]), **opts)
        end = sol.y[:, -1]
        return end[1:] - gs.h2(np.array([end[0]]))[0]

    phi0 = np.asarray(gs.h2(np.array([eta]))[0], dtype=float)
    it = 0
    for it in range(1, 51):
        m = miss(phi0)
        if np.max(np.abs(m)) <= tol:
            break
        J = np.empty((n, n))
        for j in range(n):
            e = np.zeros(n)
            e[j] = 1e-7
            J[:, j] = (miss(phi0 + e) - m) / 1e-7
        phi0 = phi0 - np.linalg.solve(J, m)
    else:
        raise ShootingError("adaptive shooting did not converge")
    sol = solve_ivp(rhs, (t0, gs.T), np.concatenate([[eta], phi0]), dense_output=True, **opts)
    t = np.linspace(t0, gs.T, 1001)
    y = sol.sol(t)
    P = np.array([Pt(s) for s in t])
    return TPBVPSolution(t, y[0], y[1:].T, P, float(np.max(np.abs(m))), it, "rk45")


# --------------------------------------------------------------------------
# Picard iteration on the mean-field map
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class PicardResult:
    t: np.ndarray
    xbar: np.ndarray               # (K + 1,)
    ybar: np.ndarray               # (K + 1, n)
    iterations: int
    history: list = field(default_factory=list)


def _coef_table(gs, t_half):
    return (np.array([gs.b1(t) for t in t_half]), np.array([gs.b2(t) for t in t_half]),
            np.array([gs.f2(t) for t in t_half]))


def _linear_fbsde(gs, t0, Pf, steps, b0_half, f0_half, h2_end, eta, table):
    """Mean of the fixed-input linear FBSDE via P and the linear phi-ODE."""
    n = gs.n
    h = (gs.T - t0) / steps
    b1, b2, f2 = table
    # everything not depending on phi, per half node
    lin = b2[:, None, :] * Pf[:, :, None] + f2                # y -> (b2 . y) P + f2 y
    src = f0_half + Pf * b0_half[:, None]
    drift = b1 + np.einsum("ij,ij->i", b2, Pf)
    phi = np.empty((2 * steps + 1, n))
    phi[-1] = h2_end
    # backward RK4 for phi on full steps; inputs known on the half lattice
    for k in range(steps, 0, -1):
        i = 2 * k

        def g(j, y):
            return -(lin[j] @ y + src[j])

        y = phi[i]
        k1 = g(i, y)
        k2 = g(i - 1, y - h / 2 * k1)
        k3 = g(i - 1, y - h / 2 * k2)
        k4 = g(i - 2, y - h * k3)
        phi[i - 2] = y - h / 6 * (k1 + 2 * k2 + 2 * k3 + k4)
    # phi at half nodes from a cubic through the full nodes
    full = np.arange(0, 2 * steps + 1, 2)
    phi[1::2] = CubicSpline(full, phi[full], axis=0)(np.arange(1, 2 * steps, 2))
    x = np.empty(steps + 1)
    x[0] = eta
    for k in range(steps):
        def f(j, xv):
            return drift[j] * xv + b2[j] @ phi[j] + b0_half[j]

        i = 2 * k
        xv = x[k]
        k1 = f(i, xv)
        k2 = f(i + 1, xv + h / 2 * k1)
        k3 = f(i + 1, xv + h / 2 * k2)
        k4 = f(i + 2, xv + h * k3)
        x[k + 1] = xv + h / 6 * (k1 + 2 * k2 + 2 * k3 + k4)
    y = Pf[::2] * x[:, None] + phi[::2]
    return x, y


def picard_map(gs: GeneralSpec, xi_mean: float, *, t0: float = 0.0, steps: int = 1_000,
               max_iters: int = 200, tol: float = 1e-10, damping: float = 1.0,
               init: tuple[np.ndarray, np.ndarray] | None = None) -> PicardResult:
    """Fixed point of (xbar, ybar) -> (E[X], E[Y]) by (damped) Picard iteration."""
    _require_degenerate(gs)
    if not 0 < damping <= 1:
        raise ValueError("damping must lie in (0, 1]")
    n = gs.n
    Pf = riccati_fine(gs, t0, steps)
    t_full = t0 + np.arange(steps + 1) * (gs.T - t0) / steps
    t_half = t0 + np.arange(2 * steps + 1) * (gs.T - t0) / (2 * steps)
    if init is None:
        xbar = np.full(steps + 1, float(xi_mean))
        ybar = np.zeros((steps + 1, n))
    else:
        xbar = np.asarray(init[0], dtype=float).copy()
        ybar = np.asarray(init[1], dtype=float).reshape(steps + 1, n).copy()
    table = _coef_table(gs, t_half)
    history = []
    for it in range(1, max_iters + 1):
        xs = CubicSpline(t_full, xbar)(t_half)
        ys = CubicSpline(t_full, ybar, axis=0)(t_half)
        b0, f0, _ = gs.sources(t_half, xs, ys)
        b0 = np.broadcast_to(np.asarray(b0, dtype=float), t_half.shape)
        f0 = np.broadcast_to(np.asarray(f0, dtype=float), t_half.shape + (n,))
        h2_end = gs.h2(np.array([xbar[-1]]))[0]
        x_new, y_new = _linear_fbsde(gs, t0, Pf, steps, b0, f0, h2_end, float(xi_mean), table)
        upd = max(np.max(np.abs(x_new - xbar)), np.max(np.abs(y_new - ybar)))
        history.append(float(upd))
        xbar = damping * x_new + (1 - damping) * xbar
        ybar = damping * y_new + (1 - damping) * ybar
        if upd <= tol:
            return PicardResult(t_full, xbar, ybar, it, history)
        if not math.isfinite(upd):
            break
    raise PicardError(f"Picard iteration did not converge in {max_iters} iterations "
                      f"(last update {history[-1]:.3g})", history)


# --------------------------------------------------------------------------
# fixtures
# --------------------------------------------------------------------------

FIXTURE_COLUMNS = ("scenario", "t0", "eta")


def write_fixture(path, scenario: str, gs: GeneralSpec, t0: float, etas, meta: str,
                  agree_tol: float = 1e-8) -> list[list]:
    """Pin phi(t0) at ``etas`` after the fixed-step and adaptive routes agree."""
    fixed = shoot_tpbvp(gs, t0, np.asarray(etas, dtype=float))
    rows = []
    for eta, sol in zip(etas, fixed):
        ref = shoot_tpbvp(gs, t0, float(eta), integrator="rk45")
        gap = float(np.max(np.abs(sol.phi0 - ref.phi0)))
        if gap > agree_tol:
            raise ShootingError(f"integrators disagree by {gap:.3g} at eta={eta}")
        rows.append([scenario, t0, float(eta), *sol.phi0])
    with open(path, "w", newline="") as fh:
        fh.write(f"# {meta}\n")
        w = csv.writer(fh)
        w.writerow([*FIXTURE_COLUMNS] + [f"phi{i + 1}" for i in range(gs.n)])
        for r in rows:
            w.writerow([r[0]] + [f"{v:.17g}" for v in r[1:]])
    return rows


def read_fixture(path) -> list[dict]:
    with open(path, newline="") as fh:
        lines = [ln for ln in fh if not ln.startswith("#")]
    out = []
    for row in csv.DictReader(lines):
        phis = [float(v) for k, v in row.items() if k.startswith("phi")]
        out.append({"scenario": row["scenario"], "t0": float(row["t0"]),
                    "eta": float(row["eta"]), "phi": np.array(phis)})
    return out
