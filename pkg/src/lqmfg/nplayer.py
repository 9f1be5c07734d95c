"""N-player game driven by the mean-field feedback, and a frozen-crowd exploitability estimate.

Every player i sees the average state and control of the other N - 1
players.  Player 1 is then offered a deviation: the optimal control of the
single-agent LQ problem in which the crowd averages are frozen at their
realized values (the clairvoyant solution of the backward phi equation along
the frozen path).  The exploitability estimate is the cost difference
between the mean-field feedback and that deviation, both run against the same
frozen crowd with common random numbers.

These runs are demonstrations: nothing quantitative is claimed about the
N-player limit.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field

import numpy as np

from .model import LQSpec
from .paths import IDIO, XI, common_increments, rng_for
from .phi_field import MasterField
from .reduction import RhoMap

PLAYER = 3          # stream tag for the replicas of player 1


@dataclass
class NPlayerRun:
    N: int
    trial: int
    t: np.ndarray
    nu_others: np.ndarray          # (steps + 1,) state mean of players 2..N
    mu_others: np.ndarray          # (steps,) control mean of players 2..N
    x_mean: np.ndarray             # (steps + 1,) mean over all players
    costs: np.ndarray = field(default_factory=lambda: np.zeros(0))


def _coefs(lq: LQSpec, t):
    ones = np.ones_like(t)
    return tuple(np.asarray(c(t), dtype=float) * ones for c in (lq.A, lq.B, lq.Q, lq.R, lq.F))


def simulate_game(lq: LQSpec, mf: MasterField, N: int, seed: int, trial: int, steps: int,
                  xi_mean: float = 0.0, xi_std: float = 0.5) -> NPlayerRun:
    """All N players use the mean-field feedback with their own empirical means."""
    if N < 2:
        raise ValueError("the N-player game needs N >= 2")
    grid = mf.grid
    if grid.M % steps:
        raise ValueError("steps must divide the field grid")
    stride = grid.M // steps
    dt = grid.T / steps
    t = np.arange(steps + 1) * dt
    A, B, Q, R, F = _coefs(lq, t)
    rho = RhoMap(lq.h, lq.eps0)
    sig, sig0 = np.asarray(lq.sigma), np.asarray(lq.sigma0)
    d = len(sig)
    dW0 = common_increments(seed, trial, steps, d, dt) @ sig0
    # one stream per player: the first N players of a larger game are the same
    x = xi_mean + xi_std * np.array([rng_for(seed, XI, trial, j).standard_normal() for j in range(N)])
    dW = np.stack([rng_for(seed, IDIO, trial, j).standard_normal((steps, d)) for j in range(N)], axis=1)
    dW = (dW * math.sqrt(dt)) @ sig
    nu1 = np.empty(steps + 1)
    mu1 = np.empty(steps)
    xm = np.empty(steps + 1)
    cost = np.zeros(N)
    for k in range(steps + 1):
        kk = k * stride
        nu_o = (x.sum() - x) / (N - 1)
        nu1[k], xm[k] = nu_o[0], x.mean()
        if k == steps:
            break
        P = mf.P.P[kk, 0]
        phi = mf.Phi.at_node(kk, nu_o)[:, 0]
        mu_hat = rho(t[k], -B[k] / R[k] * (P * nu_o + phi) - F[k] / R[k] * nu_o)
        alpha = -B[k] / R[k] * (P * x + phi) - F[k] / R[k] * x - lq.h(t[k], mu_hat)
        mu_o = (alpha.sum() - alpha) / (N - 1)
        mu1[k] = mu_o[0]
        cost += (Q[k] * (x + lq.l(t[k], nu_o)) ** 2 + R[k] * (alpha + lq.h(t[k], mu_o)) ** 2
                 + 2 * F[k] * x * (alpha + lq.q(t[k], mu_o))) * dt
        x = x + (A[k] * x + B[k] * alpha + lq.f(t[k], nu_o) + lq.b(t[k], mu_o)) * dt + dW[k] + dW0[k]
    cost += lq.G * (x + lq.g(t[-1], nu_o)) ** 2
    return NPlayerRun(N, trial, t, nu1, mu1, xm, 0.5 * cost)


def frozen_best_response_phi(lq: LQSpec, mf: MasterField, run: NPlayerRun) -> np.ndarray:
    """phi of the single-agent LQ problem with the crowd frozen along ``run``."""
    t = run.t
    steps = len(t) - 1
    stride = mf.grid.M // steps
    dt = t[1] - t[0]
    A, B, Q, R, F = _coefs(lq, t)
    P = mf.P.P[::stride, 0]
    nu, mu = run.nu_others, np.append(run.mu_others, run.mu_others[-1])
    h_mu = lq.h(t, mu)
    b0 = -B * h_mu + lq.f(t, nu) + lq.b(t, mu)
    f0 = Q * lq.l(t, nu) + F * lq.q(t, mu) - F * h_mu
    lin = (A - B * F / R) - B ** 2 / R * P           # f2 + b2 P
    phi = np.empty(steps + 1)
    phi[-1] = lq.G * lq.g(t[-1], np.array([nu[-1]]))[0]
    for k in range(steps - 1, -1, -1):
        j = k + 1
        phi[k] = phi[j] + dt * (lin[j] * phi[j] + P[j] * b0[j] + f0[j])
    return phi


def _player_costs(lq: LQSpec, mf: MasterField, run: NPlayerRun, control, x0, dW, dW0) -> np.ndarray:
    t = run.t
    steps = len(t) - 1
    dt = t[1] - t[0]
    A, B, Q, R, F = _coefs(lq, t)
    nu, mu = run.nu_others, run.mu_others
    l_nu, f_nu = lq.l(t, nu), lq.f(t, nu)
    h_mu, q_mu, b_mu = lq.h(t[:-1], mu), lq.q(t[:-1], mu), lq.b(t[:-1], mu)
    x = x0.copy()
    cost = np.zeros_like(x)
    for k in range(steps):
        a = control(k, x)
        cost += (Q[k] * (x + l_nu[k]) ** 2 + R[k] * (a + h_mu[k]) ** 2
                 + 2 * F[k] * x * (a + q_mu[k])) * dt
        x = x + (A[k] * x + B[k] * a + f_nu[k] + b_mu[k]) * dt + dW[k] + dW0[k]
    cost += lq.G * (x + lq.g(t[-1], np.array([nu[-1]]))[0]) ** 2
    return 0.5 * cost


@dataclass(frozen=True)
class TrialGap:
    N: int
    trial: int
    gap: float
    se: float


def trial_gap(lq: LQSpec, mf: MasterField, N: int, seed: int, trial: int, steps: int,
              replicas: int = 256, xi_mean: float = 0.0, xi_std: float = 0.5) -> TrialGap:
    """Exploitability of player 1 in one realization of the crowd."""
    run = simulate_game(lq, mf, N, seed, trial, steps, xi_mean, xi_std)
    t = run.t
    stride = mf.grid.M // steps
    dt = t[1] - t[0]
    A, B, Q, R, F = _coefs(lq, t)
    P = mf.P.P[::stride, 0]
    rho = RhoMap(lq.h, lq.eps0)
    nu = run.nu_others
    phi_mfg = np.array([mf.Phi.at_node(k * stride, nu[k:k + 1])[0, 0] for k in range(steps + 1)])
    mu_hat = rho(t, -B / R * (P * nu + phi_mfg) - F / R * nu)
    h_hat = lq.h(t, mu_hat)
    phi_br = frozen_best_response_phi(lq, mf, run)
    h_mu = lq.h(t[:-1], run.mu_others)

    def mfg(k, x):
        return -B[k] / R[k] * (P[k] * x + phi_mfg[k]) - F[k] / R[k] * x - h_hat[k]

    def br(k, x):
        return -B[k] / R[k] * (P[k] * x + phi_br[k]) - F[k] / R[k] * x - h_mu[k]

    sig, sig0 = np.asarray(lq.sigma), np.asarray(lq.sigma0)
    rng = rng_for(seed, PLAYER, trial)
    x0 = xi_mean + xi_std * rng.standard_normal(replicas)
    dW = (rng.standard_normal((steps, replicas, len(sig))) * math.sqrt(dt)) @ sig
    # player 1 shares the realized common shocks of the crowd
    dW0 = common_increments(seed, trial, steps, len(sig), dt) @ sig0
    diff = (_player_costs(lq, mf, run, mfg, x0, dW, dW0)
            - _player_costs(lq, mf, run, br, x0, dW, dW0))
    return TrialGap(N, trial, float(diff.mean()), float(diff.std(ddof=1) / math.sqrt(replicas)))


@dataclass(frozen=True)
class Exploitability:
    N: int
    gap: float
    se: float
    median: float
    trials: tuple

    @property
    def consistent(self) -> bool:
        """Best response can only help, up to noise."""
        return self.gap >= -2 * self.se


def estimate_exploitability(lq: LQSpec, mf: MasterField, N: int, trials: int, seed: int,
                            steps: int | None = None, replicas: int = 256,
                            xi_mean: float = 0.0, xi_std: float = 0.5) -> Exploitability:
    """Average frozen-crowd exploitability of player 1 over ``trials`` crowds.

    Trial ``k`` uses the same common path for every N, so gaps at different N
    are paired.
    """
    if N < 2:
        raise ValueError("the N-player game needs N >= 2")
    if trials < 1:
        raise ValueError("need at least one trial")
    steps = steps or mf.grid.M
    gaps = [trial_gap(lq, mf, N, seed, k, steps, replicas, xi_mean, xi_std) for k in range(trials)]
    g = np.array([x.gap for x in gaps])
    se = float(g.std(ddof=1) / math.sqrt(trials)) if trials > 1 else float(gaps[0].se)
    return Exploitability(N, float(g.mean()), se, float(np.median(g)), tuple(gaps))


def write_gap_csv(path, results: list[Exploitability], meta: str) -> None:
    with open(path, "w", newline="") as fh:
        fh.write(f"# {meta}\n")
        w = csv.writer(fh)
        w.writerow(["N", "trial", "gap", "SE"])
        for res in results:
            for tg in res.trials:
                w.writerow([tg.N, tg.trial, f"{tg.gap:.17g}", f"{tg.se:.17g}"])
