import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from antiplane.mesh import (Mesh, MeshError, MeshParseError, PartitionError, export_native, load_mesh, parse_gmsh,
                            refine_uniform, unit_square, validate_partition)

from conftest import SQUARE_GMSH, SQUARE_NATIVE


def canonical(mesh):
    """Order-independent description: triangles and tagged edges as coordinate sets."""
    key = lambda i: tuple(np.round(mesh.vertices[i], 12))  # noqa: E731
    tris = sorted(tuple(sorted(key(i) for i in t)) for t in mesh.triangles)
    edges = sorted((tuple(sorted((key(a), key(b)))), tag) for (a, b), tag in zip(mesh.edges, mesh.tags))
    return tris, edges


def test_load_native_square():
    m = load_mesh(SQUARE_NATIVE)
    assert m.n_vertices == 4 and m.n_triangles == 2
    assert sorted(m.tags) == ["C", "D", "N", "N"]
    assert np.allclose(m.signed_areas(), 0.5)


def test_clockwise_triangle_rejected():
    bad = SQUARE_NATIVE.replace("0 1 3\n", "0 3 1\n")
    with pytest.raises(MeshError, match="negative triangle area"):
        load_mesh(bad)


def test_gmsh_cross_parse_matches_native():
    a = load_mesh(SQUARE_NATIVE)
    b = load_mesh(SQUARE_GMSH, physical_tags={1: "D", 2: "N", 3: "C"})
    assert canonical(a) == canonical(b)


def test_gmsh_unknown_physical_group():
    with pytest.raises(MeshParseError, match="unknown boundary tag"):
        parse_gmsh(SQUARE_GMSH, physical_tags={1: "D", 2: "N"})


def test_parse_error_reports_line_and_column():
    bad = SQUARE_NATIVE.replace("1 0\n", "1 zero\n", 1)
    with pytest.raises(MeshParseError) as info:
        load_mesh(bad)
    assert (info.value.line, info.value.column) == (5, 3)


def test_unknown_tag_rejected():
    with pytest.raises(MeshError, match="tag"):
        load_mesh(SQUARE_NATIVE.replace("0 1 C", "0 1 X"))


def test_boundary_cover_violation():
    # drop one boundary edge: the boundary is no longer covered
    text = SQUARE_NATIVE.replace("$BoundaryEdges\n4\n", "$BoundaryEdges\n3\n").replace("2 0 N\n", "")
    with pytest.raises(MeshError, match="boundary"):
        load_mesh(text)


def test_hanging_vertex_rejected():
    # a vertex in the middle of the bottom edge that only one triangle side knows about
    v = np.array([[0, 0], [1, 0], [0, 1], [1, 1], [0.5, 0]], dtype=float)
    t = np.array([[0, 4, 2], [4, 1, 3], [4, 3, 2]])
    e = [[0, 4], [4, 1], [1, 3], [3, 2], [2, 0]]
    Mesh(v, t, e, ["C", "C", "N", "D", "N"])  # conforming variant is fine
    with pytest.raises(MeshError):
        Mesh(v[:4], np.array([[0, 1, 3], [0, 3, 2]]), [[0, 1], [1, 3], [3, 2], [2, 0], [0, 1]], list("CNDNC"))


def test_partition_strict_lengths():
    r = validate_partition(unit_square(1), "strict")
    assert r.ok
    assert (r.lengths["C"], r.lengths["N"], r.lengths["D"]) == pytest.approx((1, 2, 1), abs=1e-15)


def test_partition_all_dirichlet():
    m = unit_square(2, bottom="D", right="D", top="D", left="D")
    with pytest.raises(PartitionError, match=r"\|Γ_C\| = 0") as info:
        validate_partition(m, "strict")
    assert info.value.lengths["D"] == pytest.approx(4.0)
    r = validate_partition(m, "verification")
    assert r.warnings


def test_refine_counts():
    m = unit_square(1)
    r1 = refine_uniform(m)
    assert (r1.n_triangles, r1.n_vertices) == (8, 9)
    assert refine_uniform(r1).n_triangles == 32


def test_refine_contact_edge_children():
    r = refine_uniform(unit_square(1))
    lengths = r.edge_lengths("C")
    assert len(lengths) == 2
    assert np.allclose(lengths, 0.5)


@settings(max_examples=25, deadline=None)
@given(n=st.integers(1, 4), diag=st.sampled_from(["/", "\\"]), tags=st.permutations("CNDN"))
def test_refine_preserves_area_and_lengths(n, diag, tags):
    m = unit_square(n, *tags, diagonal=diag)
    r = refine_uniform(m)
    assert r.n_vertices == m.n_vertices + len(np.unique(np.sort(np.concatenate(
        [m.triangles[:, [0, 1]], m.triangles[:, [1, 2]], m.triangles[:, [2, 0]]]), axis=1), axis=0))
    assert abs(r.signed_areas().sum() - m.signed_areas().sum()) <= 1e-12
    for tag in "DNC":
        assert r.tag_length(tag) == pytest.approx(m.tag_length(tag), rel=1e-12, abs=1e-15)


@settings(max_examples=20, deadline=None)
@given(n=st.integers(1, 5), refine=st.integers(0, 1))
def test_native_roundtrip(n, refine):
    m = unit_square(n)
    for _ in range(refine):
        m = refine_uniform(m)
    back = load_mesh(export_native(m))
    assert canonical(back) == canonical(m)


def test_outward_normals_point_out():
    m = unit_square(3)
    mids = m.vertices[m.edges].mean(axis=1)
    nrm = m.outward_normals()
    # stepping along the normal leaves the unit square
    out = mids + 1e-3 * nrm
    assert np.all(np.any((out < 0) | (out > 1), axis=1))
