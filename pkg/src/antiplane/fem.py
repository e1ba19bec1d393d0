"""P1 finite elements on a :class:`~antiplane.mesh.Mesh`.

Assembly, degree-of-freedom bookkeeping, lumped contact quadrature and the
discrete norms used by the scheme.  The H1 norm follows the sum convention
``||v||_{L2} + ||grad v||_{L2}``.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

log = logging.getLogger(__name__)

NORM_KINDS = ("L2_Omega", "H1_Omega", "Linf_Omega", "L2_GammaC", "Linf_GammaC")


class AssemblyError(ValueError):
    pass


class NonSPDError(np.linalg.LinAlgError):
    pass


class TraceConstantError(RuntimeError):
    def __init__(self, message, theta, vector):
        super().__init__(message)
        self.theta = theta
        self.vector = vector


# ---------------------------------------------------------------- fields


@dataclass
class ScalarField:
    """Nodal values on every mesh vertex at one time node."""

    values: np.ndarray
    time_index: int | None = None


@dataclass
class BoundaryField:
    """Nodal values on the contact vertices (in DofMap order) at one time node."""

    values: np.ndarray
    time_index: int | None = None


# ---------------------------------------------------------------- dofs


@dataclass(frozen=True, eq=False)
class DofMap:
    n_vertices: int
    free: np.ndarray  # vertex index of each free dof
    dof_of_vertex: np.ndarray  # -1 on Dirichlet vertices
    contact_vertices: np.ndarray  # sorted
    contact_dof: np.ndarray  # dof index per contact vertex, -1 if constrained
    neumann_edges: np.ndarray

    @property
    def n_free(self):
        return len(self.free)

    @property
    def constrained(self):
        return np.flatnonzero(self.dof_of_vertex < 0)

    @property
    def n_contact(self):
        return len(self.contact_vertices)

    def free_contact(self):
        """(positions in the contact list, dof indices) of unconstrained contact vertices."""
        pos = np.flatnonzero(self.contact_dof >= 0)
        return pos, self.contact_dof[pos]

    def restrict(self, values):
        return np.asarray(values, dtype=float)[self.free]

    def expand(self, free_values, dirichlet=None):
        out = np.zeros(self.n_vertices) if dirichlet is None else np.array(dirichlet, dtype=float)
        if dirichlet is not None:
            out[self.dof_of_vertex >= 0] = 0.0
        out[self.free] = free_values
        return out


def build_dof_map(mesh):
    constrained = np.zeros(mesh.n_vertices, dtype=bool)
    constrained[mesh.vertices_on("D")] = True
    free = np.flatnonzero(~constrained)
    dof_of_vertex = np.full(mesh.n_vertices, -1, dtype=np.int64)
    dof_of_vertex[free] = np.arange(len(free))
    contact = mesh.vertices_on("C")
    return DofMap(
        n_vertices=mesh.n_vertices,
        free=free,
        dof_of_vertex=dof_of_vertex,
        contact_vertices=contact,
        contact_dof=dof_of_vertex[contact],
        neumann_edges=mesh.edges_with("N").copy(),
    )


# ---------------------------------------------------------------- assembly


def _gradients(mesh):
    """Barycentric gradients (M, 3, 2) and areas (M,)."""
    p = mesh.vertices[mesh.triangles]
    area = mesh.signed_areas()
    # grad lambda_i = rot(p_{i+2} - p_{i+1}) / (2 area)
    grads = np.empty((mesh.n_triangles, 3, 2))
    for i in range(3):
        e = p[:, (i + 2) % 3] - p[:, (i + 1) % 3]
        grads[:, i, 0] = -e[:, 1]
        grads[:, i, 1] = e[:, 0]
    grads /= (2.0 * area)[:, None, None]
    return grads, area


def local_stiffness(mesh, mu=1.0):
    """Element matrices (M, 3, 3) of  mu * int grad phi_i . grad phi_j."""
    grads, area = _gradients(mesh)
    mu = np.broadcast_to(np.asarray(mu, dtype=float), (mesh.n_triangles,))
    return (mu * area)[:, None, None] * np.einsum("tid,tjd->tij", grads, grads)


def _scatter(mesh, local):
    t = mesh.triangles
    rows = np.repeat(t, 3, axis=1).ravel()
    cols = np.tile(t, (1, 3)).ravel()
    n = mesh.n_vertices
    return sp.coo_matrix((local.ravel(), (rows, cols)), shape=(n, n)).tocsr()


def assemble_stiffness(mesh, mu, dofs=None):
    """Stiffness matrix of a(u, v) = int mu grad u . grad v.

    ``mu`` is a scalar or one value per triangle.  With ``dofs`` the
    Dirichlet rows and columns are eliminated; otherwise the full
    vertex-indexed matrix is returned.
    """
    mu = np.broadcast_to(np.asarray(mu, dtype=float), (mesh.n_triangles,))
    bad = np.flatnonzero(~(mu > 0.0))
    if bad.size:
        k = int(bad[0])
        raise AssemblyError(f"nonpositive coefficient mu = {mu[k]!r} on triangle {k}")
    K = _scatter(mesh, local_stiffness(mesh, mu))
    if dofs is None:
        return K
    return K[dofs.free][:, dofs.free].tocsr()


def mass_matrix(mesh):
    """Consistent P1 mass matrix (exact for products of P1 functions)."""
    area = mesh.signed_areas()
    ref = (np.ones((3, 3)) + np.eye(3)) / 12.0
    return _scatter(mesh, area[:, None, None] * ref)


def neumann_weights(mesh):
    """Trapezoid weights on Γ_N: half the incident Γ_N length per vertex."""
    return _lumped_weights(mesh, "N")


def _lumped_weights(mesh, tag):
    e = mesh.edges_with(tag)
    w = np.zeros(mesh.n_vertices)
    L = mesh.edge_lengths(tag)
    np.add.at(w, e[:, 0], 0.5 * L)
    np.add.at(w, e[:, 1], 0.5 * L)
    return w


def boundary_weights(mesh, tag="C"):
    """Lumped (trapezoid) weights w_i on the vertices of ``tag`` edges.

    Returned in the order of ``mesh.vertices_on(tag)``, which is also the
    DofMap contact order; the weights sum to the total length of the tag.
    """
    return _lumped_weights(mesh, tag)[mesh.vertices_on(tag)]


def assemble_load(mesh, f0, fN, dofs=None):
    """Load vector of  int f0 v dx + int_{Γ_N} fN v ds.

    ``f0`` and ``fN`` are per-vertex arrays (or scalars); only Γ_N vertices of
    ``fN`` are read.  The volume part integrates the P1 interpolant exactly,
    the Neumann part uses the edge trapezoid rule.
    """
    n = mesh.n_vertices
    f0 = np.broadcast_to(np.asarray(f0, dtype=float), (n,))
    fN = np.broadcast_to(np.asarray(fN, dtype=float), (n,))
    b = mass_matrix(mesh) @ f0 + neumann_weights(mesh) * fN
    if dofs is None:
        return b
    return b[dofs.free]


def dirichlet_lift(K_full, dofs, values):
    """Load correction -A_{free, D} g for nonzero Dirichlet data ``values``.

    Only used for manufactured-solution verification; the contact problem
    itself is posed with homogeneous Dirichlet data.
    """
    g = np.zeros(dofs.n_vertices)
    con = dofs.constrained
    g[con] = np.asarray(values, dtype=float)[con]
    return -(K_full @ g)[dofs.free]


# ---------------------------------------------------------------- linear solves


class SPDSolver:
    """Direct sparse factorization of an SPD matrix with a CG fallback.

    SuperLU in symmetric mode keeps diagonal pivots, so positive pivots are
    equivalent to a successful Cholesky factorization.
    """

    def __init__(self, A, check=True):
        self.A = sp.csr_matrix(A)
        self.n = self.A.shape[0]
        self._lu = None
        if self.n == 0:
            return
        if check:
            asym = abs(self.A - self.A.T).max() if self.A.nnz else 0.0
            if asym > 1e-12 * max(abs(self.A).max(), 1.0):
                raise NonSPDError("matrix is not symmetric")
        try:
            lu = spla.splu(
                self.A.tocsc(),
                permc_spec="MMD_AT_PLUS_A",
                diag_pivot_thresh=0.0,
                options=dict(SymmetricMode=True),
            )
        except RuntimeError as exc:
            raise NonSPDError(f"factorization failed: {exc}") from None
        piv = lu.U.diagonal()
        if check and not np.all(piv > 0.0):
            raise NonSPDError("matrix is not positive definite (nonpositive pivot)")
        self._lu = lu

    def solve(self, b):
        b = np.asarray(b, dtype=float)
        if self.n == 0:
            return np.zeros(b.shape)
        x = self._lu.solve(b)
        r = b - self.A @ x
        scale = np.linalg.norm(b)
        if scale > 0 and np.linalg.norm(r) > 1e-12 * scale:
            x, info = spla.cg(self.A, b, x0=x, rtol=1e-12, atol=0.0, maxiter=10 * self.n)
            if info != 0:
                log.warning("CG fallback did not reach 1e-12 (info=%d)", info)
        return x


def is_spd(A):
    try:
        SPDSolver(A)
    except NonSPDError:
        return False
    return True


# ---------------------------------------------------------------- discretization bundle


class Space:
    """Mesh + dofs + the matrices shared by norms and diagnostics."""

    def __init__(self, mesh, dofs=None):
        self.mesh = mesh
        self.dofs = build_dof_map(mesh) if dofs is None else dofs
        self.M = mass_matrix(mesh)
        self.K1 = assemble_stiffness(mesh, 1.0)
        self.contact_weights = boundary_weights(mesh, "C")

    def norm(self, field, kind):
        return norm(field, kind, self)

    def trace(self, u):
        return trace_restrict(u, self.dofs)


def norm(field, kind, space):
    """Discrete norm of a vertex or contact field.

    ``field`` may be a ScalarField, BoundaryField or bare array; its length has
    to match the domain implied by ``kind``.
    """
    if kind not in NORM_KINDS:
        raise ValueError(f"unknown norm kind {kind!r}")
    on_boundary = kind.endswith("GammaC")
    if isinstance(field, ScalarField) and on_boundary or isinstance(field, BoundaryField) and not on_boundary:
        raise TypeError(f"{type(field).__name__} is incompatible with norm kind {kind}")
    v = np.asarray(getattr(field, "values", field), dtype=float)
    expected = space.dofs.n_contact if on_boundary else space.mesh.n_vertices
    if v.shape != (expected,):
        raise ValueError(f"field of shape {v.shape} does not match {kind} (expected {expected} values)")
    if kind == "Linf_Omega" or kind == "Linf_GammaC":
        return float(np.max(np.abs(v))) if v.size else 0.0
    if kind == "L2_GammaC":
        return math.sqrt(max(float(space.contact_weights @ (v * v)), 0.0))
    l2 = math.sqrt(max(float(v @ (space.M @ v)), 0.0))
    if kind == "L2_Omega":
        return l2
    return l2 + math.sqrt(max(float(v @ (space.K1 @ v)), 0.0))


def trace_restrict(field, dofs):
    v = np.asarray(getattr(field, "values", field), dtype=float)
    return v[dofs.contact_vertices]


# ---------------------------------------------------------------- trace constant


def trace_gram(space):
    """(boundary Gram B, H1 Gram G) restricted to the free dofs."""
    dofs = space.dofs
    G = (space.M + space.K1)[dofs.free][:, dofs.free].tocsr()
    wfull = np.zeros(space.mesh.n_vertices)
    wfull[dofs.contact_vertices] = space.contact_weights
    B = sp.diags(wfull[dofs.free]).tocsr()
    return B, G


def estimate_trace_constant(mesh, dofs=None, rtol=1e-8, max_iter=20000, space=None):
    """Sharpest discrete c with ||v||_{L2(Γ_C)} <= c ||v||_{H1} on free fields.

    Power iteration on G^{-1} B with B the lumped Γ_C Gram and G the Hilbert
    H1 Gram.  The Hilbert norm never exceeds the sum-convention norm, so the
    returned value bounds the sum-convention inequality too; the sharpest
    sum-convention constant lies within a factor sqrt(2) below it.
    """
    space = Space(mesh, dofs) if space is None else space
    B, G = trace_gram(space)
    if B.nnz == 0 or not np.any(B.diagonal() > 0):
        raise ValueError("no free contact dofs: |Γ_C| = 0 or fully constrained")
    solver = SPDSolver(G)
    rng = np.random.default_rng(12345)
    v = 1.0 + 0.1 * rng.random(G.shape[0])
    theta = 0.0
    for it in range(1, max_iter + 1):
        y = solver.solve(B @ v)
        y /= np.linalg.norm(y)
        new = float(y @ (B @ y)) / float(y @ (G @ y))
        v = y
        if abs(new - theta) <= rtol * abs(new):
            log.debug("trace constant converged in %d iterations (theta=%g)", it, new)
            return math.sqrt(new)
        theta = new
    raise TraceConstantError(f"power iteration did not converge in {max_iter} iterations", theta, v)


# ---------------------------------------------------------------- errors against exact fields

# degree-5 seven-point rule on the reference triangle (barycentric, weights sum to 1)
_A1, _B1 = 0.059715871789770, 0.470142064105115
_A2, _B2 = 0.797426985353087, 0.101286507323456
_QUAD_BARY = np.array([
    [1 / 3, 1 / 3, 1 / 3],
    [_A1, _B1, _B1], [_B1, _A1, _B1], [_B1, _B1, _A1],
    [_A2, _B2, _B2], [_B2, _A2, _B2], [_B2, _B2, _A2],
])
_QUAD_W = np.array([0.225] + [0.132394152788506] * 3 + [0.125939180544827] * 3)


def quadrature_points(mesh):
    """Physical points (M, 7, 2) and weights (M, 7) of the degree-5 rule."""
    p = mesh.vertices[mesh.triangles]
    pts = np.einsum("qi,tid->tqd", _QUAD_BARY, p)
    return pts, mesh.signed_areas()[:, None] * _QUAD_W[None, :]


def integrate(mesh, fn):
    """Integral of fn(x, y) over the mesh with the degree-5 rule."""
    pts, w = quadrature_points(mesh)
    return float(np.sum(w * fn(pts[..., 0], pts[..., 1])))


def error_norms(mesh, u, exact, grad_exact=None, h=1e-6):
    """(L2 error, H1-seminorm error) of the P1 field ``u`` against ``exact(x, y)``.

    Without ``grad_exact`` the exact gradient is taken by central differences.
    """
    pts, w = quadrature_points(mesh)
    x, y = pts[..., 0], pts[..., 1]
    uh = np.einsum("qi,ti->tq", _QUAD_BARY, np.asarray(u, dtype=float)[mesh.triangles])
    grads, _ = _gradients(mesh)
    guh = np.einsum("ti,tid->td", np.asarray(u, dtype=float)[mesh.triangles], grads)
    if grad_exact is None:
        gx = (exact(x + h, y) - exact(x - h, y)) / (2 * h)
        gy = (exact(x, y + h) - exact(x, y - h)) / (2 * h)
    else:
        gx, gy = grad_exact(x, y)
    e0 = np.sum(w * (exact(x, y) - uh) ** 2)
    e1 = np.sum(w * ((gx - guh[:, None, 0]) ** 2 + (gy - guh[:, None, 1]) ** 2))
    return math.sqrt(e0), math.sqrt(e1)
