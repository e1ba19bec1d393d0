"""Triangular meshes with a Dirichlet / Neumann / Contact boundary partition.

Two text formats are read: the native section format

    $Vertices
    4
    0 0
    ...
    $Triangles
    2
    0 1 2
    ...
    $BoundaryEdges
    4
    0 1 C
    ...

and the ASCII subset of Gmsh MSH v2 (``$Nodes`` plus ``$Elements`` with line
and triangle elements, physical groups mapped to boundary tags).
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

log = logging.getLogger(__name__)

TAGS = ("D", "N", "C")
TAG_NAMES = {"D": "Dirichlet", "N": "Neumann", "C": "Contact"}
DEFAULT_GMSH_TAGS = {1: "D", 2: "N", 3: "C"}


class MeshError(ValueError):
    """A mesh violates one of its structural invariants."""


class MeshParseError(MeshError):
    def __init__(self, message, line=None, column=None):
        self.line = line
        self.column = column
        where = ""
        if line is not None:
            where = f"line {line}" + (f", column {column}" if column is not None else "")
            where += ": "
        super().__init__(where + message)


class PartitionError(MeshError):
    def __init__(self, message, lengths):
        self.lengths = dict(lengths)
        detail = ", ".join(f"|Γ_{t}| = {self.lengths[t]:.6g}" for t in TAGS)
        super().__init__(f"{message} (measured {detail})")


def _readonly(a):
    a = np.ascontiguousarray(a)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class Mesh:
    """Immutable conforming triangulation.

    ``vertices`` is (V, 2), ``triangles`` is (M, 3) counterclockwise,
    ``edges`` is (E, 2) boundary edges oriented so the domain lies to the
    left of ``edges[e, 0] -> edges[e, 1]`` and ``tags`` holds one of
    ``"D", "N", "C"`` per boundary edge.
    """

    vertices: np.ndarray
    triangles: np.ndarray
    edges: np.ndarray
    tags: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "vertices", _readonly(np.asarray(self.vertices, dtype=float).reshape(-1, 2)))
        object.__setattr__(self, "triangles", _readonly(np.asarray(self.triangles, dtype=np.int64).reshape(-1, 3)))
        edges = np.asarray(self.edges, dtype=np.int64).reshape(-1, 2)
        tags = np.asarray(self.tags, dtype="<U1").reshape(-1)
        edges, tags = _check(self.vertices, self.triangles, edges, tags)
        object.__setattr__(self, "edges", _readonly(edges))
        object.__setattr__(self, "tags", _readonly(tags))

    @property
    def n_vertices(self):
        return len(self.vertices)

    @property
    def n_triangles(self):
        return len(self.triangles)

    def signed_areas(self):
        p = self.vertices[self.triangles]
        d1 = p[:, 1] - p[:, 0]
        d2 = p[:, 2] - p[:, 0]
        return 0.5 * (d1[:, 0] * d2[:, 1] - d1[:, 1] * d2[:, 0])

    def edge_lengths(self, tag=None):
        e = self.edges if tag is None else self.edges[self.tags == tag]
        d = self.vertices[e[:, 1]] - self.vertices[e[:, 0]]
        return np.hypot(d[:, 0], d[:, 1])

    def tag_length(self, tag):
        return float(self.edge_lengths(tag).sum())

    def edges_with(self, tag):
        return self.edges[self.tags == tag]

    def vertices_on(self, tag):
        """Sorted unique vertex indices touched by edges of ``tag``."""
        return np.unique(self.edges_with(tag))

    def outward_normals(self, tag=None):
        """Unit outward normals: edge tangent rotated by -90 degrees."""
        e = self.edges if tag is None else self.edges[self.tags == tag]
        d = self.vertices[e[:, 1]] - self.vertices[e[:, 0]]
        n = np.column_stack([d[:, 1], -d[:, 0]])
        return n / np.hypot(n[:, 0], n[:, 1])[:, None]

    def h_max(self):
        p = self.vertices[self.triangles]
        lens = [np.hypot(*(p[:, (i + 1) % 3] - p[:, i]).T) for i in range(3)]
        return float(np.max(lens))


def _triangle_edges(triangles):
    """All (sorted) triangle edges, with owner triangle and local orientation."""
    t = triangles
    raw = np.concatenate([t[:, [0, 1]], t[:, [1, 2]], t[:, [2, 0]]])
    owner = np.tile(np.arange(len(t)), 3)
    return raw, owner


def _check(vertices, triangles, edges, tags):
    nv = len(vertices)
    if nv == 0 or len(triangles) == 0:
        raise MeshError("mesh has no vertices or no triangles")
    if not np.all(np.isfinite(vertices)):
        raise MeshError("non-finite vertex coordinate")
    for name, arr in (("triangle", triangles), ("boundary edge", edges)):
        if arr.size and (arr.min() < 0 or arr.max() >= nv):
            raise MeshError(f"{name} references a vertex index outside [0, {nv})")
    bad = [t for t in np.unique(tags) if t not in TAGS]
    if bad:
        raise MeshError(f"unknown boundary tag {bad[0]!r}")

    p = vertices[triangles]
    d1 = p[:, 1] - p[:, 0]
    d2 = p[:, 2] - p[:, 0]
    area = 0.5 * (d1[:, 0] * d2[:, 1] - d1[:, 1] * d2[:, 0])
    scale = max(float(np.ptp(vertices, axis=0).max()), 1.0) ** 2
    nonpos = np.flatnonzero(area <= 1e-14 * scale)
    if nonpos.size:
        k = int(nonpos[0])
        kind = "negative triangle area" if area[k] < 0 else "degenerate triangle (zero area)"
        raise MeshError(f"{kind} in triangle {k}")

    used = np.zeros(nv, dtype=bool)
    used[triangles.ravel()] = True
    if not used.all():
        raise MeshError(f"vertex {int(np.flatnonzero(~used)[0])} belongs to no triangle")

    raw, _ = _triangle_edges(triangles)
    key = np.sort(raw, axis=1)
    uniq, inverse, counts = np.unique(key, axis=0, return_inverse=True, return_counts=True)
    if counts.max() > 2:
        raise MeshError("non-manifold edge shared by more than two triangles")
    inverse = inverse.ravel()
    # an edge seen once is on the topological boundary; keep its CCW direction
    once = counts[inverse] == 1
    boundary = {tuple(k): tuple(r) for k, r in zip(key[once], raw[once])}

    given = {}
    for e, t in zip(edges, tags):
        k = (int(min(e)), int(max(e)))
        if k in given:
            raise MeshError(f"boundary edge {k} tagged more than once")
        given[k] = t
    missing = [k for k in boundary if k not in given]
    if missing:
        raise MeshError(f"boundary edge {missing[0]} has no tag (boundary edges must cover the boundary)")
    extra = [k for k in given if k not in boundary]
    if extra:
        raise MeshError(f"tagged edge {extra[0]} is not on the mesh boundary")

    out_edges = np.array([boundary[k] for k in given], dtype=np.int64).reshape(-1, 2)
    out_tags = np.array(list(given.values()), dtype="<U1")
    _check_hanging(vertices, out_edges)
    return out_edges, out_tags


def _check_hanging(vertices, edges):
    # a hanging vertex shows up as a vertex lying inside a topological boundary edge
    a = vertices[edges[:, 0]]
    b = vertices[edges[:, 1]]
    d = b - a
    L2 = (d ** 2).sum(axis=1)
    for e in range(len(edges)):
        w = vertices - a[e]
        s = (w @ d[e]) / L2[e]
        cross = w[:, 0] * d[e, 1] - w[:, 1] * d[e, 0]
        on = (np.abs(cross) <= 1e-12 * L2[e]) & (s > 1e-12) & (s < 1 - 1e-12)
        if on.any():
            v = int(np.flatnonzero(on)[0])
            raise MeshError(f"non-conforming mesh: hanging vertex {v} on edge {tuple(edges[e])}")


# ---------------------------------------------------------------- partition


@dataclass
class PartitionReport:
    mode: str
    lengths: dict
    ok: bool
    warnings: list = field(default_factory=list)


def validate_partition(mesh, mode="strict"):
    """Check |Γ_D| > 0 and |Γ_C| > 0.

    In ``"verification"`` mode a missing contact boundary is only a warning,
    which lets pure elliptic test problems through.
    """
    if mode not in ("strict", "verification"):
        raise ValueError(f"unknown partition mode {mode!r}")
    lengths = {t: mesh.tag_length(t) for t in TAGS}
    report = PartitionReport(mode=mode, lengths=lengths, ok=True)
    if lengths["D"] <= 0.0:
        raise PartitionError("|Γ_D| = 0", lengths)
    if lengths["C"] <= 0.0:
        if mode == "strict":
            raise PartitionError("|Γ_C| = 0", lengths)
        report.warnings.append("|Γ_C| = 0 (allowed in verification mode)")
        log.warning("mesh has no contact boundary; continuing in verification mode")
    return report


# ---------------------------------------------------------------- refinement


def refine_uniform(mesh):
    """Red refinement: every triangle is split into four by its edge midpoints."""
    t = mesh.triangles
    raw, _ = _triangle_edges(t)
    key = np.sort(raw, axis=1)
    uniq, inverse = np.unique(key, axis=0, return_inverse=True)
    inverse = inverse.ravel()
    nv = mesh.n_vertices
    mids = 0.5 * (mesh.vertices[uniq[:, 0]] + mesh.vertices[uniq[:, 1]])
    vertices = np.vstack([mesh.vertices, mids])

    m = nv + inverse.reshape(3, -1).T  # midpoint of edges (01, 12, 20)
    a, b, c = t[:, 0], t[:, 1], t[:, 2]
    mab, mbc, mca = m[:, 0], m[:, 1], m[:, 2]
    children = np.stack(
        [
            np.column_stack([a, mab, mca]),
            np.column_stack([mab, b, mbc]),
            np.column_stack([mca, mbc, c]),
            np.column_stack([mab, mbc, mca]),
        ],
        axis=1,
    ).reshape(-1, 3)

    lookup = {(int(i), int(j)): nv + k for k, (i, j) in enumerate(uniq)}
    edges, tags = [], []
    for (i, j), tag in zip(mesh.edges, mesh.tags):
        mid = lookup[(min(i, j), max(i, j))]
        edges += [(i, mid), (mid, j)]
        tags += [tag, tag]
    return Mesh(vertices, children, edges, tags)


# ---------------------------------------------------------------- generators


def unit_square(n=1, bottom="C", right="N", top="D", left="N", diagonal="/"):
    """Structured n x n grid of the unit square, two triangles per cell.

    With ``n=1`` this is the two-triangle square used throughout the tests.
    """
    xs = np.linspace(0.0, 1.0, n + 1)
    X, Y = np.meshgrid(xs, xs)
    vertices = np.column_stack([X.ravel(), Y.ravel()])

    def vid(i, j):
        return j * (n + 1) + i

    tris = []
    for j in range(n):
        for i in range(n):
            v00, v10, v01, v11 = vid(i, j), vid(i + 1, j), vid(i, j + 1), vid(i + 1, j + 1)
            if diagonal == "/":
                tris += [(v00, v10, v11), (v00, v11, v01)]
            else:
                tris += [(v00, v10, v01), (v10, v11, v01)]
    edges, tags = [], []
    for i in range(n):
        edges.append((vid(i, 0), vid(i + 1, 0)))
        tags.append(bottom)
        edges.append((vid(n, i), vid(n, i + 1)))
        tags.append(right)
        edges.append((vid(i + 1, n), vid(i, n)))
        tags.append(top)
        edges.append((vid(0, i + 1), vid(0, i)))
        tags.append(left)
    return Mesh(vertices, tris, edges, tags)


# ---------------------------------------------------------------- native format


class _Lines:
    """Line cursor over a text document that skips blanks and ``#`` comments."""

    def __init__(self, text):
        self.items = []
        for no, line in enumerate(text.splitlines(), start=1):
            stripped = line.split("#", 1)[0].strip()
            if stripped:
                self.items.append((no, line, stripped))
        self.pos = 0

    def next(self, what):
        if self.pos >= len(self.items):
            last = self.items[-1][0] if self.items else 1
            raise MeshParseError(f"unexpected end of input while reading {what}", last)
        item = self.items[self.pos]
        self.pos += 1
        return item

    def peek(self):
        return self.items[self.pos] if self.pos < len(self.items) else None


def _column(line, token_index):
    col = 0
    for k, tok in enumerate(line.split()):
        col = line.index(tok, col)
        if k == token_index:
            return col + 1
        col += len(tok)
    return len(line) + 1


def _tokens(item, n, conv, what):
    no, line, stripped = item
    toks = stripped.split()
    if len(toks) < n:
        raise MeshParseError(f"expected {n} fields for {what}, found {len(toks)}", no, _column(line, len(toks)))
    out = []
    for k in range(n):
        try:
            out.append(conv(toks[k]))
        except ValueError:
            raise MeshParseError(f"cannot read {toks[k]!r} in {what}", no, _column(line, k)) from None
    return out, toks[n:]


def _count(cur, section):
    item = cur.next(f"{section} count")
    (n,), _ = _tokens(item, 1, int, f"{section} count")
    if n < 0:
        raise MeshParseError("negative count", item[0], 1)
    return n


def parse_native(text):
    cur = _Lines(text)
    vertices = triangles = edges = None
    tags = []
    while cur.peek() is not None:
        no, line, stripped = cur.next("section header")
        if stripped == "$Vertices":
            n = _count(cur, "$Vertices")
            vertices = [_tokens(cur.next("vertex"), 2, float, "vertex")[0] for _ in range(n)]
        elif stripped == "$Triangles":
            n = _count(cur, "$Triangles")
            triangles = [_tokens(cur.next("triangle"), 3, int, "triangle")[0] for _ in range(n)]
        elif stripped == "$BoundaryEdges":
            n = _count(cur, "$BoundaryEdges")
            edges = []
            for _ in range(n):
                item = cur.next("boundary edge")
                ij, rest = _tokens(item, 2, int, "boundary edge")
                if not rest:
                    raise MeshParseError("boundary edge is missing its tag", item[0], _column(item[1], 2))
                if rest[0] not in TAGS:
                    raise MeshParseError(f"unknown boundary tag {rest[0]!r}", item[0], _column(item[1], 2))
                edges.append(ij)
                tags.append(rest[0])
        elif stripped.startswith("$End"):
            continue
        else:
            raise MeshParseError(f"unknown section {stripped.split()[0]!r}", no, _column(line, 0))
    for name, val in (("$Vertices", vertices), ("$Triangles", triangles), ("$BoundaryEdges", edges)):
        if val is None:
            raise MeshParseError(f"missing section {name}")
    return Mesh(vertices, triangles, edges, tags)


def export_native(mesh):
    out = ["$Vertices", str(mesh.n_vertices)]
    out += [f"{x!r} {y!r}" for x, y in mesh.vertices.tolist()]
    out += ["$Triangles", str(mesh.n_triangles)]
    out += [f"{i} {j} {k}" for i, j, k in mesh.triangles.tolist()]
    out += ["$BoundaryEdges", str(len(mesh.edges))]
    out += [f"{i} {j} {t}" for (i, j), t in zip(mesh.edges.tolist(), mesh.tags)]
    return "\n".join(out) + "\n"


# ---------------------------------------------------------------- gmsh v2


def parse_gmsh(text, physical_tags=None):
    """Read the MSH v2 ASCII subset: line (type 1) and triangle (type 2) elements.

    Line elements carry the boundary tag through their physical group.
    Triangles with clockwise node order are flipped, since Gmsh orients
    plane surfaces by their normal rather than counterclockwise in xy.
    """
    mapping = dict(DEFAULT_GMSH_TAGS if physical_tags is None else physical_tags)
    cur = _Lines(text)
    ids = {}
    coords = []
    triangles, edges, tags = [], [], []
    seen_nodes = False
    while cur.peek() is not None:
        no, line, stripped = cur.next("section header")
        if stripped == "$MeshFormat":
            item = cur.next("format line")
            (ver,), _ = _tokens(item, 1, float, "format version")
            if int(ver) != 2:
                raise MeshParseError(f"unsupported MSH version {ver}", item[0], 1)
            fmt = item[2].split()
            if len(fmt) > 1 and fmt[1] != "0":
                raise MeshParseError("binary MSH files are not supported", item[0], _column(item[1], 1))
        elif stripped == "$Nodes":
            n = _count(cur, "$Nodes")
            for _ in range(n):
                item = cur.next("node")
                (nid,), _ = _tokens(item, 1, int, "node id")
                (_, x, y), _ = _tokens(item, 3, float, "node")
                ids[nid] = len(coords)
                coords.append((x, y))
            seen_nodes = True
        elif stripped == "$Elements":
            if not seen_nodes:
                raise MeshParseError("$Elements before $Nodes", no, 1)
            n = _count(cur, "$Elements")
            for _ in range(n):
                item = cur.next("element")
                head, rest = _tokens(item, 3, int, "element header")
                _, etype, ntags = head
                try:
                    vals = [int(v) for v in rest]
                except ValueError:
                    raise MeshParseError("non-integer element field", item[0]) from None
                etags, nodes = vals[:ntags], vals[ntags:]
                nnodes = {1: 2, 2: 3, 15: 1}.get(etype)
                if nnodes is None:
                    raise MeshParseError(f"unsupported element type {etype}", item[0], _column(item[1], 1))
                if len(nodes) != nnodes:
                    raise MeshParseError(f"element type {etype} needs {nnodes} nodes", item[0])
                try:
                    local = [ids[v] for v in nodes]
                except KeyError as exc:
                    raise MeshParseError(f"element references unknown node {exc.args[0]}", item[0]) from None
                if etype == 2:
                    triangles.append(local)
                elif etype == 1:
                    phys = etags[0] if etags else None
                    if phys not in mapping:
                        raise MeshParseError(f"unknown boundary tag for physical group {phys}", item[0])
                    edges.append(local)
                    tags.append(mapping[phys])
        elif stripped.startswith("$"):
            # skip unknown sections such as $PhysicalNames
            if not stripped.startswith("$End"):
                while cur.peek() is not None and not cur.peek()[2].startswith("$End"):
                    cur.next("section body")
        else:
            raise MeshParseError(f"unexpected line {stripped!r}", no, 1)
    if not coords or not triangles:
        raise MeshParseError("no nodes or triangles found")
    vertices = np.asarray(coords, dtype=float)
    tri = np.asarray(triangles, dtype=np.int64)
    p = vertices[tri]
    d1, d2 = p[:, 1] - p[:, 0], p[:, 2] - p[:, 0]
    cw = d1[:, 0] * d2[:, 1] - d1[:, 1] * d2[:, 0] < 0
    tri[cw] = tri[cw][:, [0, 2, 1]]
    return Mesh(vertices, tri, edges, tags)


def load_mesh(source, physical_tags=None, partition="strict"):
    """Parse a mesh document (native or Gmsh v2) and validate it.

    ``partition`` is passed to :func:`validate_partition`; ``None`` skips the
    boundary-length checks.
    """
    head = next((ln.strip() for ln in source.splitlines() if ln.strip() and not ln.strip().startswith("#")), "")
    if head == "$MeshFormat":
        mesh = parse_gmsh(source, physical_tags)
    else:
        mesh = parse_native(source)
    if partition is not None:
        validate_partition(mesh, partition)
    return mesh


def read_mesh(path, physical_tags=None, partition="strict"):
    with open(path, encoding="utf-8") as fh:
        return load_mesh(fh.read(), physical_tags, partition)
