import math

import numpy as np
import pytest

from antiplane import fem
from antiplane.bonding import TimeGrid, picard_solve
from antiplane.laws import AdhesionSpec, FrictionSpec, HypothesisConstants, derive_constants
from antiplane.mesh import unit_square
from antiplane.scheme import (BudgetExceededError, CoupledProblem, Discretization, DivergenceError, SchemeConfig,
                              check_smallness, fit_contraction, random_unit_field, run_coupled, uniqueness_probe)

from conftest import contact_problem


def test_smallness_examples():
    k = HypothesisConstants(c2_vphi=0.1, c1_phi=0.2)
    s = check_smallness(1.0, k, np.ones(3), 1.0)
    assert s.delta_hat == pytest.approx(0.3) and s.passed
    zero = derive_constants(FrictionSpec(1, 1, 0), AdhesionSpec("E1", 0.0, 0.1))
    assert check_smallness(1e-6, zero, np.ones(3), 2.0).delta_hat == 0.0
    s = check_smallness(0.2, k, np.ones(3), 1.0)
    assert s.delta_hat == pytest.approx(1.5) and not s.passed


def test_config_validation():
    with pytest.raises(ValueError):
        SchemeConfig(grid=TimeGrid(1, 2), tol_outer=0.0)
    with pytest.raises(ValueError):
        SchemeConfig(grid=TimeGrid(1, 2), max_outer=0)


def test_zero_load_gives_zero_displacement():
    p = CoupledProblem(mesh=unit_square(4), fric=FrictionSpec(0.2, 0.1, 0.0), adh=AdhesionSpec("E1", 0.5, 0.2),
                       beta0=0.5)
    grid = TimeGrid(1.0, 4)
    sol = run_coupled(p, SchemeConfig(grid=grid))
    assert sol.report.termination == "converged" and sol.report.iterations == 2
    assert np.all(sol.u == 0.0)
    assert np.allclose(sol.beta, 0.5 + 0.2 * grid.nodes[:, None], atol=1e-14)


def test_pure_elliptic_reduction_matches_linear_solve():
    m = unit_square(6)
    f0 = lambda x, y, t: 2 * math.pi ** 2 * np.cos(math.pi * x) * np.cos(math.pi * y)  # noqa: E731
    exact = np.cos(math.pi * m.vertices[:, 0]) * np.cos(math.pi * m.vertices[:, 1])
    p = CoupledProblem(mesh=m, adh=AdhesionSpec("E1_ED0", 0.0), f0=f0, dirichlet=exact)
    sol = run_coupled(p, SchemeConfig(grid=TimeGrid(1.0, 2), verification=True))
    assert sol.report.iterations == 2
    d = fem.build_dof_map(m)
    K = fem.assemble_stiffness(m, 1.0)
    b = fem.assemble_load(m, f0(*m.vertices.T, 0.0), 0.0, d) + fem.dirichlet_lift(K, d, exact)
    ref = d.expand(fem.SPDSolver(K[d.free][:, d.free]).solve(b), exact)
    assert np.max(np.abs(sol.u - ref)) <= 1e-10


def test_dirichlet_data_needs_verification_mode():
    m = unit_square(2)
    p = CoupledProblem(mesh=m, dirichlet=np.ones(m.n_vertices))
    with pytest.raises(ValueError, match="verification"):
        run_coupled(p, SchemeConfig(grid=TimeGrid(1.0, 1)))


def test_contact_scenario_contracts():
    p = contact_problem(8)
    sol = run_coupled(p, SchemeConfig(grid=TimeGrid(0.5, 4)))
    rep = sol.report
    assert rep.termination == "converged"
    assert rep.smallness.passed
    assert rep.e_u[-1] + rep.e_beta[-1] <= rep.tol_outer
    assert all(r < 1 for r in rep.recorded_ratios)
    B, _ = fit_contraction(rep)
    assert B < 1
    assert rep.posthoc_residual <= 10 * rep.tol_outer
    # Dirichlet vertices stay clamped and beta is the bonding solve of the final u
    assert np.all(sol.u[:, fem.build_dof_map(p.mesh).constrained] == 0.0)
    disc = Discretization(p, sol.grid)
    again = picard_solve(disc.beta0, sol.u[:, disc.dofs.contact_vertices], disc.adh, sol.grid, tol=1e-13,
                         weights=disc.weights)
    assert np.max(np.abs(again.values - sol.beta)) <= rep.tol_outer


def test_report_deterministic():
    p = contact_problem(4)
    cfg = SchemeConfig(grid=TimeGrid(0.5, 3))
    a, b = run_coupled(p, cfg).report, run_coupled(p, cfg).report
    assert a.e_u == b.e_u and a.e_beta == b.e_beta and a.ratios == b.ratios


def test_ratios_only_above_noise_floor():
    rep = run_coupled(contact_problem(4), SchemeConfig(grid=TimeGrid(0.5, 2), tol_outer=1e-6)).report
    for prev, r in zip(rep.e_u, rep.ratios[1:]):
        assert (r is None) == (prev <= 10 * rep.tol_outer)
    assert rep.ratios[0] is None


def test_divergence_guard():
    p = contact_problem(6, lam=0.3, mu=0.15)
    with pytest.raises(DivergenceError) as info:
        run_coupled(p, SchemeConfig(grid=TimeGrid(0.1, 2)))
    err = info.value
    assert "delta_hat" in str(err)
    assert not err.report.smallness.passed
    assert err.report.ratios[-1] >= 1 and err.solution is not None


def test_budget_exceeded():
    with pytest.raises(BudgetExceededError) as info:
        run_coupled(contact_problem(4), SchemeConfig(grid=TimeGrid(0.5, 2), max_outer=3))
    assert info.value.report.termination == "budget_exceeded"
    assert info.value.report.iterations == 3


def test_fit_contraction_examples():
    e = [2 * 0.5 ** n for n in range(1, 9)]
    B, c = fit_contraction(e)
    assert B == pytest.approx(0.5, abs=1e-6) and c == pytest.approx(2.0, abs=1e-6)
    assert fit_contraction([0.3] * 6)[0] == pytest.approx(1.0)
    with pytest.raises(ValueError):
        fit_contraction([1.0, 0.5, 0.25])


def test_random_unit_field():
    s = fem.Space(unit_square(5))
    v = random_unit_field(s, seed=3)
    assert fem.norm(v, "H1_Omega", s) == pytest.approx(1.0)
    assert np.all(v[s.dofs.constrained] == 0.0)


def test_uniqueness_identical_starts():
    p = contact_problem(4)
    cfg = SchemeConfig(grid=TimeGrid(0.5, 2))
    z = np.zeros(p.mesh.n_vertices)
    rep = uniqueness_probe(p, cfg, z, z)
    assert rep.distance_u == 0.0 and rep.distance_beta == 0.0


def test_uniqueness_linear_case():
    p = CoupledProblem(mesh=unit_square(5), fric=FrictionSpec(0.3, 0, 0), adh=AdhesionSpec("E1_ED0", 0.0),
                       f0=lambda x, y, t: 1.0 + x)
    cfg = SchemeConfig(grid=TimeGrid(1.0, 2))
    rep = uniqueness_probe(p, cfg, np.zeros(p.mesh.n_vertices), random_unit_field(fem.Space(p.mesh), 1))
    assert max(rep.distance_u, rep.distance_beta) <= 1e-9


def test_inner_method_newton_agrees():
    p = contact_problem(4)
    a = run_coupled(p, SchemeConfig(grid=TimeGrid(0.5, 2)))
    b = run_coupled(p, SchemeConfig(grid=TimeGrid(0.5, 2), inner_method="regularized_newton"))
    assert np.max(np.abs(a.u - b.u)) <= 1e-8


def test_t_safe_warning():
    rep = run_coupled(contact_problem(4), SchemeConfig(grid=TimeGrid(2.0, 8))).report
    assert rep.T_safe < 2.0
    assert any("T_safe" in w for w in rep.warnings)
