"""Backward vector Riccati equation for the linear part of the decoupling field."""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.interpolate import CubicHermiteSpline

from .model import GeneralSpec, TimeGrid


class RiccatiBlowUpError(RuntimeError):
    pass


class RefinementError(RuntimeError):
    pass


def riccati_rhs(gs: GeneralSpec, t: float, P: np.ndarray) -> np.ndarray:
    """dP/dt = -(b2 . P) P - f2 P - b1 P - f1."""
    return -(gs.b2(t) @ P) * P - gs.f2(t) @ P - gs.b1(t) * P - gs.f1(t)


def bound_certificate(gs: GeneralSpec) -> float:
    """Gronwall bound on sup |P| under the (A2)(i) sign structure.

    With P >= 0 and b2 <= 0 the quadratic term only damps the backward flow,
    so the linear part alone controls growth.
    """
    n, K, T = gs.n, gs.K, gs.T
    return (float(np.linalg.norm(gs.h1)) + math.sqrt(n) * K * T) * math.exp((1 + n) * K * T)


def blowup_threshold(gs: GeneralSpec) -> float:
    return 10.0 * math.exp(3 * gs.K * gs.T) * (gs.K + 1.0)


@dataclass(frozen=True)
class RiccatiSolution:
    grid: TimeGrid
    P: np.ndarray                  # (M + 1, n)
    spec: GeneralSpec = field(repr=False)
    certificate: float = math.inf

    def __post_init__(self):
        dP = np.array([riccati_rhs(self.spec, t, p) for t, p in zip(self.grid.nodes, self.P)])
        object.__setattr__(self, "_spline", CubicHermiteSpline(self.grid.nodes, self.P, dP, axis=0))

    @property
    def n(self) -> int:
        return self.P.shape[1]

    def __call__(self, t):
        """P(t) by cubic Hermite interpolation (slopes from the ODE)."""
        return self._spline(t)

    def at(self, k: int) -> np.ndarray:
        return self.P[k]

    def derivative(self, t) -> np.ndarray:
        return riccati_rhs(self.spec, t, self(t))

    @property
    def sup_norm(self) -> float:
        return float(np.max(np.linalg.norm(self.P, axis=1)))

    def to_csv(self, path, meta: str | None = None) -> None:
        with open(path, "w", newline="") as fh:
            if meta:
                fh.write(f"# {meta}\n")
            w = csv.writer(fh)
            w.writerow(["t"] + [f"P{i + 1}" for i in range(self.n)])
            for t, row in zip(self.grid.nodes, self.P):
                w.writerow([f"{t:.17g}"] + [f"{v:.17g}" for v in row])


def _rk4_backward(gs: GeneralSpec, T: float, M: int, guard: float) -> np.ndarray:
    h = T / M
    P = np.empty((M + 1, gs.n))
    P[M] = gs.h1
    for k in range(M, 0, -1):
        t = k * h
        p = P[k]
        # integrate in reversed time: dP/ds = -rhs
        k1 = riccati_rhs(gs, t, p)
        k2 = riccati_rhs(gs, t - h / 2, p - h / 2 * k1)
        k3 = riccati_rhs(gs, t - h / 2, p - h / 2 * k2)
        k4 = riccati_rhs(gs, t - h, p - h * k3)
        P[k - 1] = p - h / 6 * (k1 + 2 * k2 + 2 * k3 + k4)
        if not np.all(np.isfinite(P[k - 1])) or np.max(np.abs(P[k - 1])) > guard:
            raise RiccatiBlowUpError(
                f"|P| exceeded {guard:.3g} at t={t - h:.6g}; coefficients violate (A1)-(A2)")
    return P


def solve_riccati(gs: GeneralSpec, grid: TimeGrid, check_refinement: bool = False,
                  refinement_tol: float = 1e-6) -> RiccatiSolution:
    """Classical RK4 on the grid, backward from P(T) = h1."""
    if not math.isclose(grid.T, gs.T):
        raise ValueError(f"grid horizon {grid.T} != spec horizon {gs.T}")
    guard = blowup_threshold(gs)
    P = _rk4_backward(gs, grid.T, grid.M, guard)
    if check_refinement:
        fine = _rk4_backward(gs, grid.T, 2 * grid.M, guard)[::2]
        diff = float(np.max(np.abs(fine - P)))
        if diff > refinement_tol:
            raise RefinementError(f"step halving changed P by {diff:.3g} > {refinement_tol}")
    return RiccatiSolution(grid=grid, P=P, spec=gs, certificate=bound_certificate(gs))


def sign_preserved(sol: RiccatiSolution, tol: float = 0.0) -> bool:
    return bool(np.all(sol.P >= -tol))
