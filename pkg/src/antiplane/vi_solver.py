"""Inner variational inequality with frozen coefficients.

The discrete problem is the minimization of

    J(v) = 1/2 v'Av - f'v + sum_i tau_i |v_i|

with A symmetric positive definite and tau_i >= 0 on the contact dofs.
Because the boundary term is lumped it is separable, so an exact coordinate
update is a soft threshold.  The non-contact dofs are minimized exactly as
one block (a sparse solve), which leaves coordinate descent on the Schur
complement of the contact block.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numba
import numpy as np
import scipy.sparse as sp

from .fem import NonSPDError, SPDSolver

log = logging.getLogger(__name__)

METHODS = ("shrinkage_cd", "regularized_newton")


class InnerSolveError(RuntimeError):
    def __init__(self, message, u, residual, iterations):
        super().__init__(f"{message} (residual {residual:.3e} after {iterations} iterations)")
        self.u = u
        self.residual = residual
        self.iterations = iterations


class ReducedSystem:
    """Factorization data of A split into contact (c) and interior (i) dofs.

    Depends on A and the contact dofs only, so one instance is shared by every
    inner problem of a coupled run.
    """

    def __init__(self, A, contact_dofs):
        A = sp.csr_matrix(A)
        n = A.shape[0]
        c = np.asarray(contact_dofs, dtype=np.int64)
        mask = np.zeros(n, dtype=bool)
        mask[c] = True
        i = np.flatnonzero(~mask)
        self.A, self.c, self.i = A, c, i
        self.Aii = A[i][:, i].tocsr()
        self.Aic = A[i][:, c].tocsc()
        Acc = A[c][:, c].toarray()
        self.interior = SPDSolver(self.Aii)
        if len(c) and len(i):
            X = self.interior.solve(self.Aic.toarray())
            self.X = X.reshape(len(i), len(c))
            S = Acc - self.Aic.T @ self.X
        else:
            self.X = np.zeros((len(i), len(c)))
            S = Acc
        self.S = np.ascontiguousarray(0.5 * (S + S.T))
        if len(c):
            try:
                np.linalg.cholesky(self.S)
            except np.linalg.LinAlgError:
                raise NonSPDError("contact Schur complement is not positive definite") from None

    def reduce(self, f):
        """Interior particular solution and reduced contact load."""
        f = np.asarray(f, dtype=float)
        zi = self.interior.solve(f[self.i]) if len(self.i) else np.zeros(0)
        g = f[self.c] - self.Aic.T @ zi if len(self.c) else np.zeros(0)
        return zi, np.asarray(g, dtype=float).ravel()

    def expand(self, zi, uc):
        u = np.empty(self.A.shape[0])
        u[self.c] = uc
        u[self.i] = zi - self.X @ uc
        return u


@dataclass(eq=False)
class InnerProblem:
    """Frozen-coefficient problem on the free dofs.

    ``tau`` holds one nonnegative threshold per entry of ``contact_dofs``.
    Pass ``system`` to share a :class:`ReducedSystem` between problems with
    the same matrix.
    """

    A: sp.spmatrix
    f: np.ndarray
    tau: np.ndarray
    contact_dofs: np.ndarray
    system: ReducedSystem | None = None

    def __post_init__(self):
        self.A = sp.csr_matrix(self.A)
        self.f = np.asarray(self.f, dtype=float).ravel()
        self.tau = np.asarray(self.tau, dtype=float).ravel()
        self.contact_dofs = np.asarray(self.contact_dofs, dtype=np.int64).ravel()
        if self.tau.shape != self.contact_dofs.shape:
            raise ValueError("tau needs one entry per contact dof")
        if np.any(self.tau < 0) or not np.all(np.isfinite(self.tau)):
            raise ValueError("friction thresholds must be finite and >= 0")
        if self.f.shape != (self.A.shape[0],):
            raise ValueError("load vector does not match the matrix")

    def reduced(self):
        if self.system is None:
            self.system = ReducedSystem(self.A, self.contact_dofs)
        return self.system

    def full_tau(self):
        t = np.zeros(self.A.shape[0])
        t[self.contact_dofs] = self.tau
        return t


@dataclass
class ViSolution:
    u: np.ndarray
    energy: float
    optimality_residual: float
    iterations: int
    method: str = "shrinkage_cd"
    energy_history: list = field(default_factory=list)


def energy(problem, u):
    u = np.asarray(u, dtype=float)
    return float(0.5 * u @ (problem.A @ u) - problem.f @ u + problem.tau @ np.abs(u[problem.contact_dofs]))


def optimality_measure(problem, u):
    """Max-norm distance of -(Au - f) from the subdifferential of the friction term.

    Zero exactly when ``u`` solves the discrete inequality.
    """
    u = np.asarray(u, dtype=float)
    r = problem.A @ u - problem.f
    out = np.abs(r)
    c = problem.contact_dofs
    if len(c):
        rc, uc, tc = r[c], u[c], problem.tau
        slide = np.abs(rc + tc * np.sign(uc))
        stick = np.maximum(0.0, np.abs(rc) - tc)
        out[c] = np.where(uc != 0.0, slide, stick)
    return float(out.max()) if out.size else 0.0


# ---------------------------------------------------------------- coordinate descent


@numba.njit(cache=True)
def _cd_kernel(S, g, tau, u, tol, max_sweeps, energies):
    n = u.shape[0]
    Su = S @ u
    sweeps = 0
    res = np.inf
    while sweeps < max_sweeps:
        # optimality of the current iterate
        res = 0.0
        for j in range(n):
            r = Su[j] - g[j]
            if u[j] != 0.0:
                s = abs(r + tau[j] * (1.0 if u[j] > 0 else -1.0))
            else:
                s = max(0.0, abs(r) - tau[j])
            if s > res:
                res = s
        if res <= tol:
            break
        for j in range(n):
            d = S[j, j]
            rj = g[j] - (Su[j] - d * u[j])
            a = abs(rj) - tau[j]
            new = 0.0
            if a > 0.0:
                new = (a if rj > 0 else -a) / d
            delta = new - u[j]
            if delta != 0.0:
                for k in range(n):
                    Su[k] += S[k, j] * delta
                u[j] = new
        e = 0.0
        for j in range(n):
            e += u[j] * (0.5 * Su[j] - g[j]) + tau[j] * abs(u[j])
        energies[sweeps] = e
        sweeps += 1
    return sweeps, res


def _solve_cd(problem, sys_, zi, g, uc, tol, max_iter):
    tau = problem.tau
    if uc.size == 0:
        return uc, 0, 0.0, []
    energies = np.empty(max(max_iter, 1))
    sweeps, res = _cd_kernel(sys_.S, g, tau, uc, tol, max_iter, energies)
    hist = energies[:sweeps].tolist()
    if len(hist) > 1:
        rise = np.diff(hist)
        scale = max(1.0, abs(hist[0]))
        if np.any(rise > 1e-12 * scale):
            log.warning("coordinate descent energy increased by %.3e", float(rise.max()))
    return uc, int(sweeps), float(res), hist


def _solve_newton(problem, sys_, zi, g, uc, tol, max_iter):
    S, tau = sys_.S, problem.tau
    if uc.size == 0:
        return uc, 0, 0.0, []
    steps = 0
    eps = 1e-2
    while eps >= 1e-10 * (1 - 1e-9):
        def Je(x):
            return 0.5 * x @ S @ x - g @ x + tau @ np.sqrt(x * x + eps * eps)

        for _ in range(100):
            q = np.sqrt(uc * uc + eps * eps)
            grad = S @ uc - g + tau * uc / q
            if np.max(np.abs(grad), initial=0.0) <= 0.1 * tol:
                break
            if steps >= max_iter:
                break
            H = S + np.diag(tau * eps * eps / q ** 3)
            step = -np.linalg.solve(H, grad)
            t, J0, slope = 1.0, Je(uc), grad @ step
            while Je(uc + t * step) > J0 + 1e-4 * t * slope and t > 1e-12:
                t *= 0.5
            uc = uc + t * step
            steps += 1
        eps *= 0.1
    energies = np.empty(max(max_iter, 1))
    sweeps, res = _cd_kernel(S, g, tau, uc, tol, max(max_iter - steps, 1), energies)
    return uc, steps + int(sweeps), float(res), energies[:sweeps].tolist()


def solve_inner(problem, tol=1e-10, max_iter=100_000, method="shrinkage_cd", u0=None):
    """Minimize J to optimality residual ``tol``.

    ``u0`` is the warm start on the free dofs (zero when omitted).
    """
    if tol <= 0:
        raise ValueError("tol must be positive")
    if method not in METHODS:
        raise ValueError(f"unknown method {method!r}")
    sys_ = problem.reduced()
    zi, g = sys_.reduce(problem.f)
    n = problem.A.shape[0]
    start = np.zeros(n) if u0 is None else np.asarray(u0, dtype=float)
    uc = np.ascontiguousarray(start[sys_.c], dtype=float)
    run = _solve_cd if method == "shrinkage_cd" else _solve_newton
    # the reduced residual equals the full one up to round-off; certify on the full problem
    inner_tol = tol
    total = 0
    hist = []
    for _ in range(4):
        uc, its, _, h = run(problem, sys_, zi, g, uc, inner_tol, max_iter - total)
        total += its
        hist += h
        u = sys_.expand(zi, uc)
        res = optimality_measure(problem, u)
        if res <= tol or total >= max_iter:
            break
        inner_tol *= 0.1
        run = _solve_cd
    if res > tol:
        raise InnerSolveError("inner solver did not reach the tolerance", u, res, total)
    return ViSolution(u=u, energy=energy(problem, u), optimality_residual=res, iterations=total,
                      method=method, energy_history=hist)


def fold_adhesion(load, beta_prev, u_prev, lam, weights, contact_dof):
    """Move the frozen adhesion term onto the right-hand side.

    All per-contact arrays are in contact-vertex order; ``contact_dof`` maps
    them to free dofs (-1 for constrained vertices, which are skipped).
    """
    out = np.array(load, dtype=float)
    inc = np.asarray(weights) * np.asarray(lam) * np.asarray(beta_prev) ** 2 * np.asarray(u_prev)
    inc = np.broadcast_to(inc, np.shape(contact_dof))
    keep = np.asarray(contact_dof) >= 0
    np.add.at(out, np.asarray(contact_dof)[keep], inc[keep])
    return out


def apriori_test_zero(problem, u, slack=1e-9):
    """Inequality obtained by testing with v = 0: a(u,u) <= f(u) - sum tau|u|.

    Returns the slack (nonnegative when it holds up to ``slack`` times scale).
    """
    u = np.asarray(u, dtype=float)
    lhs = float(u @ (problem.A @ u))
    rhs = float(problem.f @ u - problem.tau @ np.abs(u[problem.contact_dofs]))
    return rhs - lhs + slack * max(1.0, abs(lhs))

