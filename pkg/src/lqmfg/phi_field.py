"""Decoupling field Phi(t, nu), the master field U = P x + Phi, and residuals.

Phi solves a backward semilinear parabolic equation in the single variable nu
(the conditional mean of the state).  Time stepping is IMEX: the diffusion is
implicit (one tridiagonal solve per step, shared by all n components),
advection is explicit and upwinded by the sign of the drift, and the reaction
terms are explicit.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import solve_banded

from .model import GeneralSpec, SpaceGrid, TimeGrid
from .riccati import RiccatiSolution, riccati_rhs


class CFLError(ValueError):
    def __init__(self, cfl: float, required_dt: float):
        super().__init__(f"advection CFL {cfl:.3g} exceeds limit; need dt <= {required_dt:.3g}")
        self.cfl = cfl
        self.required_dt = required_dt


class DomainError(ValueError):
    pass


def nu_coefficients(gs: GeneralSpec, t: float, P_t: np.ndarray, nu, phi):
    """Drift, diffusion vector and reaction of the (nu, phi) system.

    ``nu`` has shape ``S``, ``phi`` shape ``S + (n,)``.  Returns drift ``S``,
    diffusion ``S + (d,)``, reaction ``S + (n,)`` and the coupling values
    ``(b0, f0)`` they were built from.
    """
    nu = np.asarray(nu, dtype=float)
    phi = np.asarray(phi, dtype=float)
    b2, f2 = gs.b2(t), gs.f2(t)
    ybar = P_t * nu[..., None] + phi
    b0, f0, s0 = gs.sources(t, nu, ybar)
    drift = (gs.b1(t) + b2 @ P_t) * nu + phi @ b2 + b0
    diff = gs.sigma1(t) * nu[..., None] + ybar @ gs.sigma2(t) + s0
    reaction = (phi @ b2)[..., None] * P_t + phi @ f2.T + f0 + P_t * np.asarray(b0)[..., None]
    return drift, diff, reaction


@dataclass(frozen=True)
class PhiField:
    grid: TimeGrid
    space: SpaceGrid
    values: np.ndarray             # (M + 1, N + 1, n)
    meta: dict = field(default_factory=dict, compare=False)

    @property
    def nu(self) -> np.ndarray:
        return self.space.nodes

    @property
    def n(self) -> int:
        return self.values.shape[-1]

    def _check_nu(self, nu):
        nu = np.asarray(nu, dtype=float)
        tol = 1e-12 * max(1.0, abs(self.space.nu_max))
        if np.any(nu < self.space.nu_min - tol) or np.any(nu > self.space.nu_max + tol):
            raise DomainError(f"nu outside [{self.space.nu_min}, {self.space.nu_max}]")
        return np.clip(nu, self.space.nu_min, self.space.nu_max)

    def _locate_nu(self, nu):
        h = self.space.step
        s = (nu - self.space.nu_min) / h
        i = np.clip(np.floor(s).astype(int), 0, self.space.N - 1)
        return i, (s - i)[..., None]

    def at_node(self, k: int, nu) -> np.ndarray:
        """Phi(t_k, nu) by linear interpolation in nu."""
        nu = self._check_nu(nu)
        i, w = self._locate_nu(nu)
        sl = self.values[k]
        return (1 - w) * sl[i] + w * sl[i + 1]

    def __call__(self, t, nu) -> np.ndarray:
        """Bilinear interpolation in (t, nu)."""
        t = float(t)
        if t < -1e-12 or t > self.grid.T + 1e-12:
            raise DomainError(f"t={t} outside [0, {self.grid.T}]")
        s = min(max(t / self.grid.dt, 0.0), self.grid.M)
        k = min(int(np.floor(s)), self.grid.M - 1)
        w = s - k
        if w < 1e-12:
            return self.at_node(k, nu)
        return (1 - w) * self.at_node(k, nu) + w * self.at_node(k + 1, nu)

    def grid_d_nu(self, k: int) -> np.ndarray:
        """First nu-derivative on the nodes: central inside, 2nd-order one-sided at the ends."""
        return np.gradient(self.values[k], self.space.step, axis=0, edge_order=2)

    def grid_d_nunu(self, k: int) -> np.ndarray:
        u = self.values[k]
        h = self.space.step
        out = np.empty_like(u)
        out[1:-1] = (u[2:] - 2 * u[1:-1] + u[:-2]) / h ** 2
        out[0] = (2 * u[0] - 5 * u[1] + 4 * u[2] - u[3]) / h ** 2
        out[-1] = (2 * u[-1] - 5 * u[-2] + 4 * u[-3] - u[-4]) / h ** 2
        return out

    def d_nu_at_node(self, k: int, nu) -> np.ndarray:
        nu = self._check_nu(nu)
        i, w = self._locate_nu(nu)
        g = self.grid_d_nu(k)
        return (1 - w) * g[i] + w * g[i + 1]

    def to_csv(self, path, meta: str | None = None, every: int = 1) -> None:
        with open(path, "w", newline="") as fh:
            if meta:
                fh.write(f"# {meta}\n")
            w = csv.writer(fh)
            w.writerow(["t", "nu"] + [f"Phi{i + 1}" for i in range(self.n)])
            nodes = self.grid.nodes
            for k in range(0, self.grid.M + 1, every):
                for j, v in enumerate(self.nu):
                    w.writerow([f"{nodes[k]:.17g}", f"{v:.17g}"]
                               + [f"{x:.17g}" for x in self.values[k, j]])


def _advect(u: np.ndarray, a: np.ndarray, dt: float, h: float) -> np.ndarray:
    """One explicit step of u + dt * a * du/dnu on interior nodes.

    Second-order upwind with the Beam-Warming correction (stable for
    Courant number <= 2); first-order upwind where the two-cell upwind
    stencil would leave the grid.
    """
    N = u.shape[0] - 1
    out = u.copy()
    i = np.arange(1, N)
    ai = a[1:N][:, None]
    c = np.abs(ai) * dt / h
    ui = u[1:N]
    up1 = np.where(ai > 0, u[2:N + 1], u[0:N - 1])           # one cell upwind
    i2 = np.clip(np.where(ai[:, 0] > 0, i + 2, i - 2), 0, N)
    up2 = u[i2]
    two = ((ai[:, 0] > 0) & (i + 2 <= N)) | ((ai[:, 0] <= 0) & (i - 2 >= 0))
    second = ui + 0.5 * c * (-3 * ui + 4 * up1 - up2) + 0.5 * c * c * (ui - 2 * up1 + up2)
    first = ui + c * (up1 - ui)
    out[1:N] = np.where(two[:, None], second, first)
    return out


def solve_phi(gs: GeneralSpec, P: RiccatiSolution, grid: TimeGrid, space: SpaceGrid,
              cfl_max: float = 0.9) -> PhiField:
    """Backward IMEX time stepping for Phi from Phi(T, .) = h2."""
    if P.grid != grid:
        raise ValueError("Riccati solution must live on the same time grid")
    nu = space.nodes
    N, h, dt = space.N, space.step, grid.dt
    if N < 4:
        raise ValueError("space grid needs at least 4 cells")
    vals = np.empty((grid.M + 1, N + 1, gs.n))
    vals[grid.M] = gs.h2(nu)
    max_cfl = 0.0
    for k in range(grid.M, 0, -1):
        t = k * dt
        cur = vals[k]
        drift, diff, react = nu_coefficients(gs, t, P.at(k), nu, cur)
        amax = float(np.max(np.abs(drift[1:N])))
        cfl = amax * dt / h
        max_cfl = max(max_cfl, cfl)
        if cfl > cfl_max:
            raise CFLError(cfl, cfl_max * h / amax)
        rhs = _advect(cur, drift, dt, h) + dt * react
        D = np.sum(diff * diff, axis=-1)
        nxt = np.empty_like(cur)
        if np.any(D[1:N] > 0):
            c = 0.5 * D[1:N] * dt / h ** 2
            # linear extrapolation at both ends turns the first and last
            # interior rows into identities
            c[0] = 0.0
            c[-1] = 0.0
            ab = np.zeros((3, N - 1))
            ab[0, 1:] = -c[:-1]
            ab[1] = 1 + 2 * c
            ab[2, :-1] = -c[1:]
            nxt[1:N] = solve_banded((1, 1), ab, rhs[1:N])
        else:
            nxt[1:N] = rhs[1:N]
        nxt[0] = 2 * nxt[1] - nxt[2]
        nxt[N] = 2 * nxt[N - 1] - nxt[N - 2]
        if not np.all(np.isfinite(nxt)) or np.max(np.abs(nxt)) > 1e12:
            raise FloatingPointError(f"Phi blew up at t={t - dt:.6g}")
        vals[k - 1] = nxt
    return PhiField(grid, space, vals, meta={"max_cfl": max_cfl})


# --------------------------------------------------------------------------
# master field
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class MasterField:
    P: RiccatiSolution
    Phi: PhiField

    @property
    def grid(self) -> TimeGrid:
        return self.Phi.grid

    def __call__(self, t, x, nu):
        return eval_U(self, t, x, nu)


def eval_U(field: MasterField, t, x, nu) -> np.ndarray:
    """U(t, x, nu) = P(t) x + Phi(t, nu); exactly affine in x."""
    P_t = field.P.at(field.grid.index(t)) if _is_node(field.grid, t) else field.P(t)
    phi = field.Phi(t, nu)
    x = np.asarray(x, dtype=float)
    return P_t * x[..., None] + phi


def _is_node(grid: TimeGrid, t) -> bool:
    k = round(float(t) / grid.dt)
    return abs(k * grid.dt - float(t)) <= 1e-12 * max(1.0, grid.T)


def terminal_residual(field: MasterField, gs: GeneralSpec, x, nu) -> np.ndarray:
    return eval_U(field, field.grid.T, x, nu) - (gs.h1 * np.asarray(x, dtype=float)[..., None] + gs.h2(nu))


def master_residual(field, gs: GeneralSpec, t: float, x: float, nu: float, *,
                    steps: tuple[float, float, float] | None = None,
                    mean_field=None, return_terms: bool = False):
    """Left-hand side of the general master equation at (t, x, nu).

    ``field`` is a :class:`MasterField` (x-derivatives exact, nu-derivatives
    by central differences on the Phi grid, dP/dt from the Riccati
    right-hand side) or any callable ``U(t, x, nu) -> R^n``; for the latter
    every derivative is a central difference with ``steps = (dt, dx, dnu)``
    and ``E[U(t, xi, nu)]`` is ``mean_field(t, nu)`` (default ``U(t, nu, nu)``,
    exact for fields affine in x).
    """
    t, x, nu = float(t), float(x), float(nu)
    if isinstance(field, MasterField):
        dt, dnu = field.grid.dt, field.Phi.space.step
        sp = field.Phi.space
        if not (dt - 1e-12 <= t <= field.grid.T - dt + 1e-12):
            raise DomainError("t must be one step inside the time grid")
        if not (sp.nu_min + dnu - 1e-12 <= nu <= sp.nu_max - dnu + 1e-12):
            raise DomainError("nu must be one step inside the space grid")
        Phi = field.Phi
        P_t = field.P.at(field.grid.index(t)) if _is_node(field.grid, t) else field.P(t)
        phi = Phi(t, nu)
        U = P_t * x + phi
        EU = P_t * nu + phi
        Ut = riccati_rhs(gs, t, P_t) * x + (Phi(t + dt, nu) - Phi(t - dt, nu)) / (2 * dt)
        Ux = P_t
        Uxx = np.zeros_like(U)
        Uxnu = np.zeros_like(U)
        Unu = (Phi(t, nu + dnu) - Phi(t, nu - dnu)) / (2 * dnu)
        Ununu = (Phi(t, nu + dnu) - 2 * phi + Phi(t, nu - dnu)) / dnu ** 2
    else:
        if steps is None:
            raise ValueError("finite-difference steps (dt, dx, dnu) required for a generic field")
        dt, dx, dnu = steps
        U = np.asarray(field(t, x, nu), dtype=float)
        EU = np.asarray(mean_field(t, nu) if mean_field else field(t, nu, nu), dtype=float)
        Ut = (field(t + dt, x, nu) - field(t - dt, x, nu)) / (2 * dt)
        Ux = (field(t, x + dx, nu) - field(t, x - dx, nu)) / (2 * dx)
        Uxx = (field(t, x + dx, nu) - 2 * U + field(t, x - dx, nu)) / dx ** 2
        Unu = (field(t, x, nu + dnu) - field(t, x, nu - dnu)) / (2 * dnu)
        Ununu = (field(t, x, nu + dnu) - 2 * U + field(t, x, nu - dnu)) / dnu ** 2
        Uxnu = (field(t, x + dx, nu + dnu) - field(t, x + dx, nu - dnu)
                - field(t, x - dx, nu + dnu) + field(t, x - dx, nu - dnu)) / (4 * dx * dnu)

    b2 = gs.b2(t)
    b0, f0, s0 = gs.sources(t, np.array(nu), EU)
    b0 = float(b0)
    sig1, sig2 = gs.sigma1(t), gs.sigma2(t)
    common_x = sig1 * x + U @ sig2 + s0
    common_nu = sig1 * nu + EU @ sig2 + s0
    terms = {
        "t": Ut,
        "x": Ux * (gs.b1(t) * x + b2 @ U + b0),
        "xx": 0.5 * Uxx * (common_x @ common_x + gs.sigma(t) @ gs.sigma(t)),
        "nu": Unu * (gs.b1(t) * nu + b2 @ EU + b0),
        "nunu": 0.5 * Ununu * (common_nu @ common_nu),
        "xnu": Uxnu * (common_x @ common_nu),
        "source": gs.f1(t) * x + gs.f2(t) @ U + f0,
    }
    total = sum(terms.values())
    return (total, terms) if return_terms else total


def interior_lattice(field: MasterField, count: int = 3, core: float = 0.6,
                     x_values=(-1.0, 0.0, 1.0)) -> list[tuple[float, float, float]]:
    """Lattice of (t, x, nu) grid nodes inside the core of the domain."""
    grid, sp = field.grid, field.Phi.space
    ks = np.linspace(1, grid.M - 1, count + 2)[1:-1].round().astype(int)
    lo = sp.nu_min + 0.5 * (1 - core) * (sp.nu_max - sp.nu_min)
    hi = sp.nu_max - 0.5 * (1 - core) * (sp.nu_max - sp.nu_min)
    js = np.linspace((lo - sp.nu_min) / sp.step, (hi - sp.nu_min) / sp.step, count).round().astype(int)
    nus = sp.nu_min + js * sp.step
    return [(k * grid.dt, float(x), float(v)) for k in ks for x in x_values for v in nus]


def residual_table(field: MasterField, gs: GeneralSpec, points) -> np.ndarray:
    """Rows (t, x, nu, residual_1..n)."""
    rows = []
    for t, x, nu in points:
        r = master_residual(field, gs, t, x, nu)
        rows.append([t, x, nu, *np.atleast_1d(r)])
    return np.array(rows)


def slope_certificate(field: MasterField, core: float | None = None) -> float:
    """sup_t sup_nu |d/dnu (P(t) nu + Phi(t, nu))| from grid differences."""
    Phi = field.Phi
    slopes = np.diff(Phi.values, axis=1) / Phi.space.step + field.P.P[:, None, :]
    if core is not None:
        mid = 0.5 * (Phi.nu[:-1] + Phi.nu[1:])
        half = 0.5 * core * (Phi.space.nu_max - Phi.space.nu_min)
        centre = 0.5 * (Phi.space.nu_max + Phi.space.nu_min)
        slopes = slopes[:, np.abs(mid - centre) <= half]
    return float(np.max(np.abs(slopes)))
