"""Bonding field on the contact boundary for a given displacement history.

The integral form beta(t) = beta0 + int_0^t H(beta(s), u(s)) ds is solved
per contact vertex by Picard iteration with composite trapezoid quadrature;
an explicit RK4 integrator is kept as an independent cross-check.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np

from .laws import eval_H

log = logging.getLogger(__name__)


class BondingError(RuntimeError):
    def __init__(self, message, values=None):
        super().__init__(message)
        self.values = values


@dataclass(frozen=True)
class TimeGrid:
    T: float
    n_steps: int

    def __post_init__(self):
        if not (self.T > 0 and math.isfinite(self.T)):
            raise ValueError("time horizon T must be positive")
        if int(self.n_steps) != self.n_steps or self.n_steps < 1:
            raise ValueError("n_steps must be an integer >= 1")

    @property
    def dt(self):
        return self.T / self.n_steps

    @property
    def nodes(self):
        return np.arange(self.n_steps + 1) * (self.T / self.n_steps)

    def __len__(self):
        return self.n_steps + 1


@dataclass
class BetaTrajectory:
    """Bonding field per time node, shape (n_steps + 1, n_contact)."""

    values: np.ndarray
    grid: TimeGrid
    iterations: int = 0
    increments: list = field(default_factory=list)  # max_k ||delta beta(t_k)||
    weighted_increments: list = field(default_factory=list)  # max_k exp(-omega t_k) ||delta beta(t_k)||
    omega: float = 0.0
    lipschitz: float = 0.0
    clipped: bool = False

    @property
    def contraction_ratio(self):
        """Geometric mean ratio of the last few Picard increments (nan if too few)."""
        inc = [x for x in self.increments if x > 0]
        if len(inc) < 3:
            return float("nan")
        tail = np.log(inc[-5:])
        return float(np.exp(np.mean(np.diff(tail))))

    def __getitem__(self, k):
        return self.values[k]


def _as_traj(u_traj, grid, n_contact):
    u = np.asarray(u_traj, dtype=float)
    if u.ndim <= 1:  # constant in time (and possibly in space)
        u = np.broadcast_to(u, (len(grid), n_contact))
    if u.shape != (len(grid), n_contact):
        raise ValueError(f"displacement trace has shape {u.shape}, expected {(len(grid), n_contact)}")
    return u


def _rate(adh, beta, u):
    h = np.asarray(eval_H(adh, beta, u), dtype=float)
    if not np.all(np.isfinite(h)):
        raise BondingError("non-finite bonding rate", beta)
    return h


def _boundary_l2(delta, weights):
    return np.sqrt(np.maximum((delta * delta) @ weights, 0.0))


def picard_solve(beta0, u_traj, adh, grid, tol=1e-12, max_iter=1000, weights=None, beta_init=None,
                 clip_beta_box=False):
    """Fixed point of beta -> beta0 + cumulative trapezoid of H(beta, u).

    Stops when the largest boundary-L2 change over the nodes is <= ``tol``.
    The change is also tracked in the norm max_k exp(-omega t_k) ||.||, with
    omega twice the largest observed Lipschitz quotient of H in beta; in that
    norm the Picard map contracts with factor about 1/2.
    """
    beta0 = np.atleast_1d(np.asarray(beta0, dtype=float))
    nc = beta0.size
    u = _as_traj(u_traj, grid, nc)
    w = np.ones(nc) if weights is None else np.asarray(weights, dtype=float)
    beta = np.tile(beta0, (len(grid), 1)) if beta_init is None else np.array(beta_init, dtype=float)
    if beta.shape != u.shape:
        raise ValueError("initial bonding trajectory has the wrong shape")
    out = BetaTrajectory(values=beta, grid=grid, clipped=clip_beta_box)
    with np.errstate(over="ignore", invalid="ignore"):
        return _picard_loop(out, beta0, beta, u, adh, grid, w, tol, max_iter, clip_beta_box)


def _picard_loop(out, beta0, beta, u, adh, grid, w, tol, max_iter, clip_beta_box):
    t = grid.nodes
    half = 0.5 * grid.dt
    H = _rate(adh, beta, u)
    L = 0.0
    for it in range(1, max_iter + 1):
        new = np.empty_like(beta)
        new[0] = beta0
        np.cumsum(half * (H[:-1] + H[1:]), axis=0, out=new[1:])
        new[1:] += beta0
        if clip_beta_box:
            np.clip(new, 0.0, 1.0, out=new)
        if not np.all(np.isfinite(new)):
            raise BondingError("Picard iterate is not finite", new)
        H_new = _rate(adh, new, u)
        delta = new - beta
        moved = np.abs(delta) > 1e-300
        if moved.any():
            L = max(L, float(np.max(np.abs(H_new - H)[moved] / np.abs(delta)[moved])))
        omega = 2.0 * L
        per_node = _boundary_l2(delta, w)
        change = float(per_node.max())
        out.increments.append(change)
        out.weighted_increments.append(float(np.max(np.exp(-omega * t) * per_node)))
        beta, H = new, H_new
        if change <= tol:
            out.values, out.iterations, out.omega, out.lipschitz = beta, it, omega, L
            return out
    out.values, out.iterations, out.omega, out.lipschitz = beta, max_iter, 2.0 * L, L
    raise BondingError(f"Picard iteration did not converge in {max_iter} iterations "
                       f"(last change {out.increments[-1]:.3e}; dt*L/2 = {half * L:.3g}, "
                       "the discrete iteration needs it below 1)", beta)


def rk4_integrate(beta0, u_traj, adh, grid):
    """Classical RK4 with u interpolated linearly between grid nodes."""
    beta0 = np.atleast_1d(np.asarray(beta0, dtype=float))
    u = _as_traj(u_traj, grid, beta0.size)
    dt = grid.dt
    out = np.empty_like(u)
    out[0] = beta0
    b = beta0.copy()
    for k in range(grid.n_steps):
        ua, ub = u[k], u[k + 1]
        um = 0.5 * (ua + ub)
        k1 = _rate(adh, b, ua)
        k2 = _rate(adh, b + 0.5 * dt * k1, um)
        k3 = _rate(adh, b + 0.5 * dt * k2, um)
        k4 = _rate(adh, b + dt * k3, ub)
        b = b + dt / 6.0 * (k1 + 2 * k2 + 2 * k3 + k4)
        if not np.all(np.isfinite(b)):
            raise BondingError(f"non-finite RK4 stage at step {k}", out[: k + 1])
        out[k + 1] = b
    return BetaTrajectory(values=out, grid=grid)


def safe_horizon(beta0, u_traj, adh):
    """T_safe = min(beta0) / (2 ||lambda|| max_k ||u(t_k)||^2_inf); inf if undriven."""
    c_low = float(np.min(beta0))
    umax = float(np.max(np.abs(u_traj))) if np.size(u_traj) else 0.0
    denom = 2.0 * adh.lam_sup * umax * umax
    if denom <= 0.0:
        return math.inf
    return c_low / denom
