"""Brute-force references for the test suite."""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass

import numpy as np

MAX_THRESHOLDED = 12


class OracleError(RuntimeError):
    def __init__(self, message, best=None):
        super().__init__(message)
        self.best = best


@dataclass
class DenseInstance:
    """Small dense twin of an inner problem: min 1/2 v'Av - f'v + sum tau|v|."""

    A: np.ndarray
    f: np.ndarray
    tau: np.ndarray

    def __post_init__(self):
        self.A = np.asarray(self.A, dtype=float)
        self.f = np.asarray(self.f, dtype=float)
        self.tau = np.asarray(self.tau, dtype=float)
        n = len(self.f)
        if self.A.shape != (n, n) or self.tau.shape != (n,):
            raise ValueError("inconsistent instance shapes")
        if not np.allclose(self.A, self.A.T) or np.any(self.tau < 0):
            raise ValueError("A must be symmetric and tau nonnegative")
        np.linalg.cholesky(self.A)

    @property
    def thresholded(self):
        return np.flatnonzero(self.tau > 0)

    def energy(self, v):
        return float(0.5 * v @ self.A @ v - self.f @ v + self.tau @ np.abs(v))

    def as_inner(self):
        """Equivalent InnerProblem (sparse matrix, all thresholded dofs as contact)."""
        import scipy.sparse as sp

        from .vi_solver import InnerProblem

        c = self.thresholded
        return InnerProblem(sp.csr_matrix(self.A), self.f, self.tau[c], c)


def brute_sign_pattern(inst, tol=1e-11):
    """Exact minimizer by enumerating all 3^m sign patterns of the thresholded dofs.

    For a pattern s the zero entries are fixed, the rest solve
    A_FF v_F = f_F - tau_F s_F; the pattern is consistent when the signs agree
    and every stuck dof satisfies |residual| <= tau.
    """
    th = inst.thresholded
    m = len(th)
    if m > MAX_THRESHOLDED:
        raise ValueError(f"{m} thresholded dofs exceed the enumeration cap of {MAX_THRESHOLDED}")
    n = len(inst.f)
    scale = max(1.0, float(np.abs(inst.f).max(initial=0.0)), float(inst.tau.max(initial=0.0)))
    best, best_gap = None, math.inf
    found = []
    for pattern in itertools.product((-1, 0, 1), repeat=m):
        s = np.zeros(n)
        s[th] = pattern
        stuck = np.zeros(n, dtype=bool)
        stuck[th[np.asarray(pattern, dtype=int) == 0]] = True
        F = np.flatnonzero(~stuck)
        v = np.zeros(n)
        if len(F):
            v[F] = np.linalg.solve(inst.A[np.ix_(F, F)], inst.f[F] - inst.tau[F] * s[F])
        r = inst.f - inst.A @ v  # must lie in tau * subdifferential of |.|
        sign_gap = np.maximum(0.0, -(s[th] * v[th]))[np.asarray(pattern) != 0]
        stick_gap = np.maximum(0.0, np.abs(r[stuck]) - inst.tau[stuck])
        gap = max(sign_gap.max(initial=0.0), stick_gap.max(initial=0.0))
        if gap <= tol * scale:
            found.append(v)
        if gap < best_gap:
            best, best_gap = v, gap
    if not found:
        raise OracleError(f"no consistent sign pattern (best gap {best_gap:.3e})", best)
    # ties at |r| = tau can make two patterns describe the same point
    return min(found, key=inst.energy)


def scalar_e3_solution(beta0, lam, u_const, t, tol=1e-12):
    """beta(t) for d beta/dt = -lam beta/(1+beta) u^2 with constant u.

    Bisection on ln b + b = ln beta0 + beta0 - lam u^2 t over (0, beta0].
    """
    if not beta0 > 0:
        raise ValueError("beta0 must be positive")
    if lam < 0 or t < 0:
        raise ValueError("lam and t must be nonnegative")
    target = math.log(beta0) + beta0 - lam * u_const * u_const * t
    phi = lambda b: math.log(b) + b - target  # noqa: E731
    hi = beta0
    lo = beta0 * math.exp(-lam * u_const * u_const * t - 1.0)
    if phi(hi) <= 0.0:
        return hi
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        if mid == lo or mid == hi:
            break
        if phi(mid) > 0.0:
            hi = mid
        else:
            lo = mid
    return 0.5 * (lo + hi)


def fd_gradient_check(problem, point, h=1e-5):
    """Max relative error between central differences of J and its gradient.

    The gradient Av - f + tau sign(v) exists only away from the kinks, so
    every contact entry of ``point`` must exceed 10h in magnitude.
    """
    from .vi_solver import energy

    v = np.asarray(point, dtype=float)
    c = problem.contact_dofs
    if len(c) and np.min(np.abs(v[c])) <= 10.0 * h:
        raise ValueError("point too close to the nonsmooth kink at a contact dof")
    grad = problem.A @ v - problem.f
    grad[c] += problem.tau * np.sign(v[c])
    fd = np.empty_like(v)
    for i in range(len(v)):
        e = np.zeros_like(v)
        e[i] = h
        fd[i] = (energy(problem, v + e) - energy(problem, v - e)) / (2.0 * h)
    return float(np.max(np.abs(fd - grad)) / max(float(np.max(np.abs(grad))), 1e-300))
