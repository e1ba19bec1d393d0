"""Outer fixed-point iteration coupling the inner VI solves and the bonding ODE.

Iterate n freezes (beta^{n-1}, u^{n-1}) in the friction bound and the
adhesion term, solves the inner problem independently at every time node,
then recomputes the bonding field for the new displacement history.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np

from . import bonding, fem
from .laws import AdhesionSpec, FrictionSpec, derive_constants, eval_g
from .vi_solver import InnerProblem, InnerSolveError, ReducedSystem, fold_adhesion, optimality_measure, solve_inner

log = logging.getLogger(__name__)


class SchemeError(RuntimeError):
    def __init__(self, message, report=None, solution=None):
        super().__init__(message)
        self.report = report
        self.solution = solution


class DivergenceError(SchemeError):
    pass


class BudgetExceededError(SchemeError):
    pass


class InnerFailure(SchemeError):
    def __init__(self, message, node, cause, report=None):
        super().__init__(f"time node {node}: {message}", report)
        self.node = node
        self.cause = cause


# ---------------------------------------------------------------- data


@dataclass(eq=False)
class CoupledProblem:
    """Everything that defines one contact scenario.

    ``f0`` and ``fN`` may be scalars, per-vertex arrays, (n_nodes, n_vertices)
    arrays, or callables ``f(x, y, t)`` evaluated at the vertices.
    ``mu`` is a scalar or one value per triangle.  ``dirichlet`` (per-vertex
    values) is only accepted in verification mode.
    """

    mesh: object
    mu: object = 1.0
    fric: FrictionSpec = field(default_factory=FrictionSpec)
    adh: AdhesionSpec = field(default_factory=AdhesionSpec)
    beta0: object = 1.0
    f0: object = 0.0
    fN: object = 0.0
    mu_star: float | None = None
    dirichlet: np.ndarray | None = None


@dataclass
class SchemeConfig:
    grid: bonding.TimeGrid
    tol_outer: float = 1e-8
    max_outer: int = 100
    tol_inner: float = 1e-11
    max_inner: int = 200_000
    inner_method: str = "shrinkage_cd"
    tol_picard: float | None = None
    max_picard: int = 1000
    u0: np.ndarray | None = None
    clip_beta_box: bool = False
    verification: bool = False
    divergence_window: int = 3

    def __post_init__(self):
        if not self.tol_outer > 0:
            raise ValueError("tol_outer must be positive")
        if self.max_outer < 1:
            raise ValueError("max_outer must be >= 1")


@dataclass
class SmallnessReport:
    mu_star: float
    c2_vphi: float
    c1_phi: float
    beta0_sup: float
    c0_hat: float
    numerator: float
    delta_hat: float
    passed: bool


@dataclass
class ConvergenceReport:
    e_u: list = field(default_factory=list)
    e_beta: list = field(default_factory=list)
    ratios: list = field(default_factory=list)  # None where the denominator is at noise level
    inner_iterations: list = field(default_factory=list)
    picard_iterations: list = field(default_factory=list)
    smallness: SmallnessReport | None = None
    termination: str = "running"
    T_safe: float = math.inf
    posthoc_residual: float = math.nan
    tol_outer: float = 0.0
    warnings: list = field(default_factory=list)

    @property
    def iterations(self):
        return len(self.e_u)

    @property
    def recorded_ratios(self):
        return [r for r in self.ratios if r is not None]

    def rows(self):
        for n, (eu, eb, r, ii, pi) in enumerate(
            zip(self.e_u, self.e_beta, self.ratios, self.inner_iterations, self.picard_iterations), start=1
        ):
            yield n, eu, eb, r, ii, pi


@dataclass
class CoupledSolution:
    u: np.ndarray  # (n_nodes, n_vertices)
    beta: np.ndarray  # (n_nodes, n_contact)
    report: ConvergenceReport
    grid: bonding.TimeGrid
    bonding: bonding.BetaTrajectory | None = None


# ---------------------------------------------------------------- smallness


def check_smallness(mu_star, consts, beta0, c0_hat):
    """delta_hat = (c2_vphi c0 + c1_phi c0 ||beta0||^2) / mu_star; passes when < 1."""
    if not mu_star > 0:
        raise ValueError("mu_star must be positive")
    b = float(np.max(np.abs(beta0))) if np.size(beta0) else 0.0
    num = consts.c2_vphi * c0_hat + consts.c1_phi * c0_hat * b * b
    delta = num / mu_star
    return SmallnessReport(mu_star=float(mu_star), c2_vphi=consts.c2_vphi, c1_phi=consts.c1_phi, beta0_sup=b,
                           c0_hat=float(c0_hat), numerator=num, delta_hat=delta, passed=delta < 1.0)


# ---------------------------------------------------------------- setup


def _per_node(value, grid, mesh, name):
    nn, nv = len(grid), mesh.n_vertices
    if callable(value):
        x, y = mesh.vertices[:, 0], mesh.vertices[:, 1]
        rows = [np.broadcast_to(np.asarray(value(x, y, t), dtype=float), (nv,)) for t in grid.nodes]
        out = np.array(rows)
    else:
        v = np.asarray(value, dtype=float)
        if v.ndim == 0 or v.shape == (nv,):
            out = np.broadcast_to(v, (nn, nv)).copy()
        elif v.shape == (nn, nv):
            out = v.copy()
        else:
            raise ValueError(f"{name} has shape {v.shape}; expected scalar, ({nv},) or ({nn}, {nv})")
    if not np.all(np.isfinite(out)):
        raise ValueError(f"{name} has non-finite values")
    return out


class Discretization:
    """Assembled operators of a CoupledProblem on a time grid."""

    def __init__(self, problem, grid, verification=False, space=None):
        mesh = problem.mesh
        self.problem = problem
        self.grid = grid
        self.space = fem.Space(mesh) if space is None else space
        self.dofs = self.space.dofs
        nt = mesh.n_triangles
        self.mu = np.broadcast_to(np.asarray(problem.mu, dtype=float), (nt,)).copy()
        self.mu_star = float(self.mu.min()) if problem.mu_star is None else float(problem.mu_star)
        K_full = fem.assemble_stiffness(mesh, self.mu)
        self.A = K_full[self.dofs.free][:, self.dofs.free].tocsr()
        self.weights = self.space.contact_weights
        nc = self.dofs.n_contact
        self.beta0 = np.broadcast_to(np.asarray(problem.beta0, dtype=float), (nc,)).copy()
        adh = problem.adh
        self.lam = np.broadcast_to(adh.lam, (nc,)).copy()
        self.adh = AdhesionSpec(law=adh.law, lam=self.lam,
                                E_D=np.broadcast_to(adh.E_D, (nc,)).copy() if adh.law != "E1_ED0" else 0.0)
        self.fric = problem.fric
        self.pos, self.cdofs = self.dofs.free_contact()
        self.f0 = _per_node(problem.f0, grid, mesh, "f0")
        self.fN = _per_node(problem.fN, grid, mesh, "fN")
        self.dirichlet = None
        lift = 0.0
        if problem.dirichlet is not None:
            if not verification:
                raise ValueError("nonzero Dirichlet data is only allowed in verification mode")
            self.dirichlet = np.asarray(problem.dirichlet, dtype=float)
            lift = fem.dirichlet_lift(K_full, self.dofs, self.dirichlet)
        self.base = np.array([fem.assemble_load(mesh, self.f0[k], self.fN[k], self.dofs) + lift
                              for k in range(len(grid))])
        self.system = ReducedSystem(self.A, self.cdofs)

    def inner_problem(self, k, u_prev_k, beta_prev_k):
        """Frozen problem at node k from a full-vertex u and contact beta."""
        trace = u_prev_k[self.dofs.contact_vertices]
        g = eval_g(self.fric, np.abs(trace), beta_prev_k)
        tau = (self.weights * np.atleast_1d(g))[self.pos]
        f = fold_adhesion(self.base[k], beta_prev_k, trace, self.lam, self.weights, self.dofs.contact_dof)
        return InnerProblem(self.A, f, tau, self.cdofs, system=self.system)

    def expand(self, u_free):
        return self.dofs.expand(u_free, self.dirichlet)

    def norms_u(self, u):
        return np.array([fem.norm(row, "H1_Omega", self.space) for row in u])

    def norms_beta(self, beta):
        return np.array([fem.norm(row, "L2_GammaC", self.space) for row in beta])


# ---------------------------------------------------------------- outer loop


def _initial_u(config, disc):
    nn, nv = len(config.grid), disc.space.mesh.n_vertices
    if config.u0 is None:
        u = np.zeros((nn, nv))
    else:
        u0 = np.asarray(config.u0, dtype=float)
        u = np.broadcast_to(u0, (nn, nv)).copy() if u0.shape == (nv,) else u0.copy()
        if u.shape != (nn, nv):
            raise ValueError(f"initial guess has shape {u0.shape}")
        con = disc.dofs.constrained
        if np.any(u[:, con] != 0.0):
            raise ValueError("initial guess must vanish on the Dirichlet boundary")
    if disc.dirichlet is not None:
        u[:, disc.dofs.constrained] = disc.dirichlet[disc.dofs.constrained]
    return u


def run_coupled(problem, config, c0_hat=None, disc=None):
    """Iterate until e_u + e_beta <= tol_outer.

    Raises DivergenceError after ``divergence_window`` consecutive ratios
    B_n >= 1 and BudgetExceededError after ``max_outer`` iterations; both
    carry the report and the last iterate.
    """
    grid = config.grid
    disc = Discretization(problem, grid, config.verification) if disc is None else disc
    report = ConvergenceReport(tol_outer=config.tol_outer)
    consts = derive_constants(disc.fric, disc.adh)
    if disc.dofs.n_contact and len(disc.cdofs):
        if c0_hat is None:
            c0_hat = fem.estimate_trace_constant(disc.space.mesh, space=disc.space)
        report.smallness = check_smallness(disc.mu_star, consts, disc.beta0, c0_hat)
        if not report.smallness.passed:
            msg = f"smallness condition fails: delta_hat = {report.smallness.delta_hat:.4g} >= 1"
            report.warnings.append(msg)
            log.warning(msg)
    tol_picard = config.tol_picard if config.tol_picard is not None else 1e-3 * config.tol_outer

    u_prev = _initial_u(config, disc)
    beta_prev = np.tile(disc.beta0, (len(grid), 1))
    traj = None
    streak = 0
    for n in range(1, config.max_outer + 1):
        u_new = np.empty_like(u_prev)
        inner_its = 0
        for k in range(len(grid)):
            prob = disc.inner_problem(k, u_prev[k], beta_prev[k])
            try:
                sol = solve_inner(prob, config.tol_inner, config.max_inner, config.inner_method,
                                  u0=u_prev[k][disc.dofs.free])
            except InnerSolveError as exc:
                raise InnerFailure(str(exc), k, exc, report) from exc
            inner_its += sol.iterations
            u_new[k] = disc.expand(sol.u)
        contact = u_new[:, disc.dofs.contact_vertices]
        try:
            traj = bonding.picard_solve(disc.beta0, contact, disc.adh, grid, tol_picard, config.max_picard,
                                        weights=disc.weights, beta_init=beta_prev,
                                        clip_beta_box=config.clip_beta_box)
        except bonding.BondingError as exc:
            raise SchemeError(f"bonding solve failed at outer iteration {n}: {exc}", report) from exc
        beta_new = traj.values
        e_u = float(disc.norms_u(u_new - u_prev).max())
        e_b = float(disc.norms_beta(beta_new - beta_prev).max()) if beta_new.size else 0.0
        ratio = None
        if report.e_u and report.e_u[-1] > 10.0 * config.tol_outer:
            ratio = e_u / report.e_u[-1]
        report.e_u.append(e_u)
        report.e_beta.append(e_b)
        report.ratios.append(ratio)
        report.inner_iterations.append(inner_its)
        report.picard_iterations.append(traj.iterations)
        log.info("outer %d: e_u=%.3e e_beta=%.3e ratio=%s", n, e_u, e_b, "-" if ratio is None else f"{ratio:.4f}")
        u_prev, beta_prev = u_new, beta_new
        solution = CoupledSolution(u=u_prev, beta=beta_prev, report=report, grid=grid, bonding=traj)
        if not (math.isfinite(e_u) and math.isfinite(e_b)):
            report.termination = "diverged"
            raise DivergenceError("iterates became non-finite", report, solution)
        if e_u + e_b <= config.tol_outer:
            report.termination = "converged"
            break
        streak = streak + 1 if ratio is not None and ratio >= 1.0 else 0
        if streak >= config.divergence_window:
            report.termination = "diverged"
            extra = ""
            if report.smallness is not None:
                extra = f"; smallness delta_hat = {report.smallness.delta_hat:.4g}"
            raise DivergenceError(f"{streak} consecutive contraction ratios >= 1{extra}", report, solution)
    else:
        report.termination = "budget_exceeded"
        raise BudgetExceededError(f"no convergence within {config.max_outer} outer iterations", report, solution)

    report.T_safe = bonding.safe_horizon(disc.beta0, u_prev[:, disc.dofs.contact_vertices], disc.adh)
    if grid.T > report.T_safe:
        msg = f"T = {grid.T:g} exceeds the safe horizon T_safe = {report.T_safe:.4g}"
        report.warnings.append(msg)
        log.warning(msg)
    report.posthoc_residual = self_consistent_residual(disc, u_prev, beta_prev)
    return solution


def self_consistent_residual(disc, u, beta):
    """Optimality residual of each node's problem rebuilt from (u, beta) itself."""
    worst = 0.0
    for k in range(len(disc.grid)):
        prob = disc.inner_problem(k, u[k], beta[k])
        worst = max(worst, optimality_measure(prob, u[k][disc.dofs.free]))
    return worst


# ---------------------------------------------------------------- diagnostics


def fit_contraction(report):
    """Least-squares fit e_n ~ c B^n over the iterations with recorded ratios.

    Accepts a ConvergenceReport or a plain sequence of errors e_1, e_2, ...
    Returns (B_fit, c_fit).
    """
    if isinstance(report, ConvergenceReport):
        e = np.asarray(report.e_u, dtype=float)
        idx = [n for n, r in enumerate(report.ratios) if r is not None]
        use = sorted(set(idx) | {n - 1 for n in idx})
        if len(idx) < 3:
            raise ValueError(f"need at least 3 recorded ratios, have {len(idx)}")
        n = np.asarray(use) + 1
        e = e[use]
    else:
        e = np.asarray(report, dtype=float)
        if len(e) < 4:
            raise ValueError("need at least 4 errors (3 ratios)")
        n = np.arange(1, len(e) + 1)
    if np.any(e <= 0):
        raise ValueError("errors must be positive to fit a geometric rate")
    slope, intercept = np.polyfit(n, np.log(e), 1)
    return float(np.exp(slope)), float(np.exp(intercept))


def random_unit_field(space, seed=0):
    """Random field vanishing on Γ_D with H1 (sum convention) norm 1."""
    rng = np.random.default_rng(seed)
    v = np.zeros(space.mesh.n_vertices)
    v[space.dofs.free] = rng.standard_normal(space.dofs.n_free)
    return v / fem.norm(v, "H1_Omega", space)


@dataclass
class UniquenessReport:
    distance_u: float
    distance_beta: float
    tol_outer: float
    solutions: tuple

    @property
    def ok(self):
        return max(self.distance_u, self.distance_beta) <= 10.0 * self.tol_outer


def uniqueness_probe(problem, config, u0_a, u0_b, c0_hat=None):
    """Run the scheme from two initial guesses and measure how far apart the limits are."""
    disc = Discretization(problem, config.grid, config.verification)
    if c0_hat is None and len(disc.cdofs):
        c0_hat = fem.estimate_trace_constant(problem.mesh, space=disc.space)
    sols = []
    for u0 in (u0_a, u0_b):
        cfg = SchemeConfig(**{**config.__dict__, "u0": u0})
        sols.append(run_coupled(problem, cfg, c0_hat=c0_hat, disc=disc))
    a, b = sols
    du = float(disc.norms_u(a.u - b.u).max())
    db = float(disc.norms_beta(a.beta - b.beta).max()) if a.beta.size else 0.0
    return UniquenessReport(distance_u=du, distance_beta=db, tol_outer=config.tol_outer, solutions=tuple(sols))
