import math

import numpy as np
import pytest
import scipy.linalg as sla
import scipy.sparse as sp
from hypothesis import given, settings
from hypothesis import strategies as st

from antiplane import fem
from antiplane.mesh import Mesh, refine_uniform, unit_square


def one_triangle():
    v = np.array([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]])
    return Mesh(v, np.array([[0, 1, 2]]), [[0, 1], [1, 2], [2, 0]], ["C", "N", "D"])


def test_dofs_top_dirichlet():
    d = fem.build_dof_map(unit_square(1))
    assert len(d.constrained) == 2 and d.n_free == 2


def test_dofs_all_dirichlet_leaves_interior():
    m = unit_square(3, "D", "D", "D", "D")
    d = fem.build_dof_map(m)
    assert d.n_free == 4
    assert np.all((m.vertices[d.free] > 0) & (m.vertices[d.free] < 1))


def test_contact_list_three_vertices():
    d = fem.build_dof_map(unit_square(2))
    assert d.n_contact == 3
    assert np.all(np.diff(d.contact_vertices) > 0)


def test_local_stiffness_right_triangle():
    K = fem.assemble_stiffness(one_triangle(), 1.0).toarray()
    assert np.allclose(K, 0.5 * np.array([[2, -1, -1], [-1, 1, 0], [-1, 0, 1]]), atol=1e-15)


def test_stiffness_linear_in_mu():
    m = unit_square(3)
    K1 = fem.assemble_stiffness(m, 1.0)
    K10 = fem.assemble_stiffness(m, 10.0)
    assert abs(K10 - 10 * K1).max() <= 1e-13


def test_stiffness_row_sums_vanish():
    K = fem.assemble_stiffness(unit_square(1), 1.0)
    assert np.allclose(np.asarray(K.sum(axis=1)).ravel(), 0.0, atol=1e-15)


def test_nonpositive_mu_names_triangle():
    mu = np.ones(8)
    mu[5] = -1.0
    with pytest.raises(fem.AssemblyError, match="triangle 5"):
        fem.assemble_stiffness(unit_square(2), mu)


@settings(max_examples=15, deadline=None)
@given(n=st.integers(1, 6), seed=st.integers(0, 10_000))
def test_stiffness_spd_and_symmetric(n, seed):
    m = unit_square(n)
    mu = 0.5 + np.random.default_rng(seed).random(m.n_triangles)
    A = fem.assemble_stiffness(m, mu, fem.build_dof_map(m))
    assert abs(A - A.T).max() <= 1e-14 * abs(A).max()
    np.linalg.cholesky(A.toarray())
    assert fem.is_spd(A)


def test_load_partition_of_unity():
    m = unit_square(4)
    assert fem.assemble_load(m, 1.0, 0.0).sum() == pytest.approx(1.0, abs=1e-14)


def test_neumann_load_on_unit_edge():
    m = unit_square(3, bottom="C", right="N", top="D", left="D")
    assert fem.assemble_load(m, 0.0, 1.0).sum() == pytest.approx(1.0, abs=1e-14)


def test_manufactured_load_functional_converges():
    # <f, I_h w> against the analytic value of int 2 pi^2 cos(pi x) cos(pi y) x y = 8 / pi^2
    exact = 8.0 / math.pi ** 2
    m = unit_square(2)
    errs = []
    for _ in range(4):
        x, y = m.vertices.T
        b = fem.assemble_load(m, 2 * math.pi ** 2 * np.cos(math.pi * x) * np.cos(math.pi * y), 0.0)
        errs.append(abs(b @ (x * y) - exact))
        m = refine_uniform(m)
    rates = np.log2(np.array(errs[:-1]) / errs[1:])
    assert errs[-1] < 2e-3
    assert np.all(rates > 1.8)


def test_boundary_weights_single_edge():
    assert np.allclose(fem.boundary_weights(unit_square(1)), [0.5, 0.5])


def test_boundary_weights_two_edges():
    assert np.allclose(fem.boundary_weights(unit_square(2)), [0.25, 0.5, 0.25])


def test_boundary_weight_sum_matches_length():
    m = refine_uniform(unit_square(3))
    assert abs(fem.boundary_weights(m).sum() - m.tag_length("C")) <= 1e-14


def test_norm_examples():
    m = unit_square(4)
    s = fem.Space(m)
    assert fem.norm(np.full(m.n_vertices, 2.0), "L2_Omega", s) == pytest.approx(2.0, rel=1e-14)
    for kind in fem.NORM_KINDS:
        n = s.dofs.n_contact if kind.endswith("GammaC") else m.n_vertices
        assert fem.norm(np.zeros(n), kind, s) == 0.0
    x = m.vertices[:, 0]
    assert fem.norm(x, "H1_Omega", s) == pytest.approx(1 / math.sqrt(3) + 1, rel=1e-13)


def test_linf_is_max_nodal_value(rng):
    s = fem.Space(unit_square(3))
    v = rng.standard_normal(s.mesh.n_vertices)
    assert fem.norm(v, "Linf_Omega", s) == np.max(np.abs(v))


def test_norm_kind_mismatch():
    s = fem.Space(unit_square(2))
    with pytest.raises(TypeError):
        fem.norm(fem.ScalarField(np.ones(9)), "L2_GammaC", s)
    with pytest.raises(ValueError):
        fem.norm(np.ones(4), "L2_Omega", s)
    with pytest.raises(ValueError):
        fem.norm(np.ones(9), "energy", s)


def test_trace_restrict(rng):
    m = unit_square(3)
    d = fem.build_dof_map(m)
    assert np.all(fem.trace_restrict(np.ones(m.n_vertices), d) == 1.0)
    v = rng.standard_normal(m.n_vertices)
    assert np.array_equal(fem.trace_restrict(v, d), v[d.contact_vertices])
    assert np.all(fem.trace_restrict(np.zeros(m.n_vertices), d) == 0.0)


def test_trace_constant_inequality_on_random_fields(rng):
    m = unit_square(6)
    s = fem.Space(m)
    c0 = fem.estimate_trace_constant(m, space=s)
    for _ in range(100):
        v = np.zeros(m.n_vertices)
        v[s.dofs.free] = rng.standard_normal(s.dofs.n_free)
        assert fem.norm(s.trace(v), "L2_GammaC", s) <= c0 * fem.norm(v, "H1_Omega", s) * (1 + 1e-12)


def test_trace_constant_shrinks_with_contact_zone():
    m = unit_square(4)
    tags = m.tags.copy()
    bottom = np.flatnonzero(tags == "C")
    tags[bottom[:2]] = "N"
    smaller = Mesh(m.vertices, m.triangles, m.edges, tags)
    assert fem.estimate_trace_constant(smaller) <= fem.estimate_trace_constant(m) * (1 + 1e-8)


def test_trace_constant_matches_dense_eigensolve():
    m = unit_square(1)
    s = fem.Space(m)
    B, G = fem.trace_gram(s)
    theta = sla.eigh(B.toarray(), G.toarray(), eigvals_only=True).max()
    assert fem.estimate_trace_constant(m) == pytest.approx(math.sqrt(theta), rel=1e-7)


def test_trace_constant_requires_contact():
    with pytest.raises(ValueError):
        fem.estimate_trace_constant(unit_square(2, "D", "N", "D", "N"))


def test_galerkin_minimizes_quadratic_energy(rng):
    m = unit_square(5)
    d = fem.build_dof_map(m)
    A = fem.assemble_stiffness(m, 1.0, d)
    b = fem.assemble_load(m, 1.0, 0.5, d)
    u = fem.SPDSolver(A).solve(b)
    E = lambda v: 0.5 * v @ (A @ v) - b @ v  # noqa: E731
    assert all(E(u) <= E(u + 1e-2 * rng.standard_normal(u.size)) for _ in range(100))


def test_spd_solver_rejects_bad_matrices():
    with pytest.raises(fem.NonSPDError):
        fem.SPDSolver(sp.csr_matrix(np.array([[1.0, 2.0], [0.0, 1.0]])))
    with pytest.raises(fem.NonSPDError):
        fem.SPDSolver(sp.csr_matrix(np.array([[1.0, 2.0], [2.0, 1.0]])))


def test_error_norms_of_interpolant_converge():
    f = lambda x, y: np.sin(np.pi * x) * np.cos(np.pi * y)  # noqa: E731
    m = unit_square(2)
    prev = None
    for _ in range(3):
        m = refine_uniform(m)
        e0, e1 = fem.error_norms(m, f(*m.vertices.T), f)
        if prev:
            assert prev[0] / e0 > 3.6 and prev[1] / e1 > 1.8
        prev = (e0, e1)


def test_integrate_polynomial_exactly():
    m = unit_square(1)
    assert fem.integrate(m, lambda x, y: x ** 2 * y ** 3) == pytest.approx(1 / 12, rel=1e-12)
