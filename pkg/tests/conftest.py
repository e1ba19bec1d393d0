import numpy as np
import pytest

from antiplane.mesh import unit_square

SQUARE_NATIVE = """\
# unit square, two triangles
$Vertices
4
0 0
1 0
0 1
1 1
$Triangles
2
0 1 3
0 3 2
$BoundaryEdges
4
0 1 C
1 3 N
3 2 D
2 0 N
"""

SQUARE_GMSH = """\
$MeshFormat
2.2 0 8
$EndMeshFormat
$PhysicalNames
3
1 1 "dirichlet"
1 2 "neumann"
1 3 "contact"
$EndPhysicalNames
$Nodes
4
1 0 0 0
2 1 0 0
3 0 1 0
4 1 1 0
$EndNodes
$Elements
6
1 1 2 3 1 1 2
2 1 2 2 2 2 4
3 1 2 1 3 4 3
4 1 2 2 4 3 1
5 2 2 0 1 1 4 2
6 2 2 0 1 1 3 4
$EndElements
"""


@pytest.fixture
def square():
    return unit_square(1)


@pytest.fixture
def rng():
    return np.random.default_rng(20240607)


def contact_problem(n=8, law="E1_ED0", lam=0.3, E_D=0.0, beta0=0.8, fric=(0.05, 0.1, 0.3), mu=1.0, load=2.0):
    """Unit-square scenario with sliding on Γ_C driven by a growing body force."""
    from antiplane.laws import AdhesionSpec, FrictionSpec
    from antiplane.scheme import CoupledProblem

    return CoupledProblem(mesh=unit_square(n), mu=mu, fric=FrictionSpec(*fric),
                          adh=AdhesionSpec(law, lam, 0.0 if law == "E1_ED0" else E_D), beta0=beta0,
                          f0=lambda x, y, t: load * (1 + t) + 0 * x)


ACCEPTANCE_LINES = []


@pytest.fixture
def criterion():
    """Record one PASS/FAIL line per acceptance criterion; returns the verdict."""

    def record(number, title, ok, detail):
        line = f"[{'PASS' if ok else 'FAIL'}] criterion {number:>2}: {title} | {detail}"
        ACCEPTANCE_LINES.append(line)
        print(line)
        return ok

    return record


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split("criterion")[1].split(":")[0])):
            terminalreporter.write_line(line)
