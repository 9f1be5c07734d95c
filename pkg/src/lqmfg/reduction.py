"""Consistency-map inversion and the LQ game -> general FBSDE coefficient map."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .model import GeneralSpec, LQSpec, NonlinearMap


class RhoConvergenceError(RuntimeError):
    """Inversion of m -> m + h(t, m) failed; (B3) is violated somewhere."""


@dataclass(frozen=True)
class RhoMap:
    """Inverse of ``m -> m + h(t, m)``.

    Safeguarded Newton: the iterate stays inside a sign-change bracket, and a
    Newton step that would leave it is replaced by bisection.
    """

    h: NonlinearMap
    eps0: float
    tol: float = 1e-12
    max_iter: int = 100

    def __call__(self, t, z):
        t_arr, z_arr = np.broadcast_arrays(np.asarray(t, dtype=float), np.asarray(z, dtype=float))
        scalar = z_arr.ndim == 0
        t_arr, z_arr = np.atleast_1d(t_arr).astype(float), np.atleast_1d(z_arr).astype(float)
        m = self._solve(t_arr.ravel(), z_arr.ravel()).reshape(z_arr.shape)
        return float(m[0]) if scalar else m

    def derivative(self, t, z):
        """d rho / dz = 1 / (1 + h'(t, rho(t, z)))."""
        return 1.0 / (1.0 + self.h.d1(t, self(t, z)))

    def _residual(self, t, m, z):
        return m + self.h(t, m) - z

    def _solve(self, t, z):
        m = z - self.h(t, z)  # exact when h is constant near z
        g = self._residual(t, m, z)
        scale = np.maximum(1.0, np.abs(z))
        done = np.abs(g) <= self.tol * scale
        if np.all(done):
            return m

        # plain Newton first; 1 + h' is bounded away from 0 so this usually
        # converges in a few steps
        mn = m
        for _ in range(8):
            with np.errstate(divide="ignore", invalid="ignore"):
                mn = mn - self._residual(t, mn, z) / (1.0 + self.h.d1(t, mn))
            if not np.all(np.isfinite(mn)):
                break
            if np.all(np.abs(self._residual(t, mn, z)) <= self.tol * scale):
                return mn

        # bracket [lo, hi] with g(lo) <= 0 <= g(hi) in the increasing case;
        # orientation flips when 1 + h' < 0
        slope = 1.0 + self.h.d1(t, m)
        sgn = np.where(slope >= 0, 1.0, -1.0)
        width = np.maximum(1.0, np.abs(g) / self.eps0)
        lo = m - width
        hi = m + width
        for _ in range(200):
            glo = sgn * self._residual(t, lo, z)
            ghi = sgn * self._residual(t, hi, z)
            bad = (glo > 0) | (ghi < 0)
            if not np.any(bad & ~done):
                break
            width = np.where(bad, 2 * width, width)
            lo = np.where(glo > 0, lo - width, lo)
            hi = np.where(ghi < 0, hi + width, hi)
        else:
            raise RhoConvergenceError("could not bracket rho: m + h(t, m) is not monotone")

        for _ in range(self.max_iter):
            g = self._residual(t, m, z)
            done = done | (np.abs(g) <= self.tol * scale)
            if np.all(done):
                return m
            sg = sgn * g
            lo = np.where(sg < 0, m, lo)
            hi = np.where(sg > 0, m, hi)
            dg = 1.0 + self.h.d1(t, m)
            with np.errstate(divide="ignore", invalid="ignore"):
                step = m - g / dg
            ok = np.isfinite(step) & (step > np.minimum(lo, hi)) & (step < np.maximum(lo, hi))
            nxt = np.where(ok, step, 0.5 * (lo + hi))
            stalled = (hi - lo) <= 4 * np.finfo(float).eps * np.maximum(1.0, np.abs(m))
            done = done | stalled
            m = np.where(done, m, nxt)
        g = self._residual(t, m, z)
        if np.any(np.abs(g) > 1e-10 * scale):
            raise RhoConvergenceError(
                f"rho inversion did not converge (max residual {np.max(np.abs(g)):.3g})")
        return m


def invert_rho(h: NonlinearMap, eps0: float, t, z):
    """Return ``m`` with ``m + h(t, m) = z``."""
    return RhoMap(h, eps0)(t, z)


def lq_to_general(lq: LQSpec) -> GeneralSpec:
    """Coefficients of the conditional mean field FBSDE for the LQ game.

    The state is scalar (n = 1).  The coupling maps evaluate the consistent
    control mean ``mu* = rho(t, -B ybar / R - F xbar / R)`` once per call of
    :meth:`GeneralSpec.sources`.
    """
    rho = RhoMap(lq.h, lq.eps0)
    A, B, Q, R, F = lq.A, lq.B, lq.Q, lq.R, lq.F
    sigma = np.array(lq.sigma, dtype=float)
    sigma0 = np.array(lq.sigma0, dtype=float)
    d = len(sigma)

    def mu_star(t, xbar, ybar):
        ybar = np.asarray(ybar, dtype=float)
        y = ybar[..., 0] if ybar.ndim and ybar.shape[-1] == 1 else ybar
        return rho(t, -B(t) / R(t) * y - F(t) / R(t) * np.asarray(xbar, dtype=float))

    live = {k: not getattr(lq, k).is_zero() for k in ("f", "b", "l", "h", "q")}

    def ev(key, t, x):
        return getattr(lq, key)(t, x) if live[key] else 0.0

    def parts(t, xbar, ybar):
        xbar = np.asarray(xbar, dtype=float)
        mu = mu_star(t, xbar, ybar)
        hmu = ev("h", t, mu)
        b0 = -B(t) * hmu + ev("f", t, xbar) + ev("b", t, mu) + 0.0 * xbar
        f0 = Q(t) * ev("l", t, xbar) + F(t) * ev("q", t, mu) - F(t) * hmu + 0.0 * xbar
        s0 = np.broadcast_to(sigma0, np.shape(xbar) + (d,)).copy()
        return np.asarray(b0, dtype=float), np.asarray(f0, dtype=float)[..., None], s0

    def b0(t, x, y):
        return parts(t, x, y)[0]

    def f0(t, x, y):
        return parts(t, x, y)[1]

    def s0(t, x, y):
        return np.broadcast_to(sigma0, np.shape(x) + (d,)).copy()

    def h2(x):
        return (lq.G * np.asarray(lq.g(0.0, x), dtype=float))[..., None]

    ts = np.linspace(0, lq.T, 101)
    b1v = A(ts) - B(ts) * F(ts) / R(ts)
    K = max(lq.K, float(np.max(np.abs(b1v))), float(np.max(B(ts) ** 2 / R(ts))),
            float(np.max(Q(ts) - F(ts) ** 2 / R(ts))), abs(lq.G),
            float(np.max(np.abs(sigma), initial=0.0)),
            _coupling_lipschitz(lq))

    return GeneralSpec(
        n=1, d=d, T=lq.T, K=K, name=lq.name,
        b1=lambda t: float(A(t) - B(t) * F(t) / R(t)),
        b2=lambda t: np.array([-B(t) ** 2 / R(t)]),
        f1=lambda t: np.array([Q(t) - F(t) ** 2 / R(t)]),
        f2=lambda t: np.array([[A(t) - B(t) * F(t) / R(t)]]),
        sigma1=lambda t: np.zeros(d),
        sigma2=lambda t: np.zeros((1, d)),
        sigma=lambda t: sigma,
        h1=np.array([lq.G]),
        b0=b0, f0=f0, sigma0=s0, h2=h2,
        sources_fn=parts,
        degenerate=not np.any(sigma0),
        lq=lq,
    )


def _coupling_lipschitz(lq: LQSpec) -> float:
    """Crude upper bound on the Lipschitz constants of b0, f0, h2."""
    T = lq.T
    s = {k: (getattr(lq, k).slope_bound(T) if getattr(lq, k).slope_bound(T) is not None else lq.K)
         for k in ("f", "b", "l", "h", "q", "g")}
    ts = np.linspace(0, T, 101)
    B, R, F, Q = (np.max(np.abs(c(ts))) for c in (lq.B, lq.R, lq.F, lq.Q))
    Rmin = float(np.min(lq.R(ts)))
    dmu = (B + F) / Rmin / lq.eps0
    lip_b0 = s["f"] + (B * s["h"] + s["b"]) * dmu
    lip_f0 = Q * s["l"] + F * (s["q"] + s["h"]) * dmu
    return float(max(lip_b0, lip_f0, abs(lq.G) * s["g"]))


def mu_from_means(lq: LQSpec, t, xbar, ybar):
    """Control mean consistent with conditional means (xbar, ybar) of state and adjoint."""
    rho = RhoMap(lq.h, lq.eps0)
    return rho(t, -lq.B(t) / lq.R(t) * np.asarray(ybar, dtype=float)
               - lq.F(t) / lq.R(t) * np.asarray(xbar, dtype=float))
