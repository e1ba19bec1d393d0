import math

import numpy as np
import pytest

from antiplane.bonding import BondingError, TimeGrid, picard_solve, rk4_integrate, safe_horizon
from antiplane.laws import AdhesionSpec
from antiplane.oracle import scalar_e3_solution


def test_grid_validation():
    g = TimeGrid(2.0, 4)
    assert len(g) == 5 and g.dt == 0.5 and np.all(np.diff(g.nodes) > 0)
    with pytest.raises(ValueError):
        TimeGrid(0.0, 3)
    with pytest.raises(ValueError):
        TimeGrid(1.0, 0)


def test_zero_rate_is_constant():
    g = TimeGrid(1.0, 10)
    tr = picard_solve([0.3, 0.9], np.ones((11, 2)), AdhesionSpec("E1", 0.0, 0.0), g)
    assert tr.iterations == 1
    assert np.all(tr.values == [0.3, 0.9])
    assert np.all(rk4_integrate([0.3, 0.9], 1.0, AdhesionSpec("E1", 0.0, 0.0), g).values == [0.3, 0.9])


def test_linear_growth_exact():
    g = TimeGrid(1.0, 7)
    adh = AdhesionSpec("E1", 1.0, 0.2)
    tr = picard_solve([0.5], np.zeros((8, 1)), adh, g)
    assert tr.values[-1, 0] == pytest.approx(0.7, abs=1e-14)
    rk = rk4_integrate([0.5], np.zeros((8, 1)), adh, g)
    assert np.allclose(rk.values[:, 0], 0.5 + 0.2 * g.nodes, atol=1e-14)


def test_initial_value_exact():
    g = TimeGrid(1.0, 5)
    tr = picard_solve([0.37, 0.81], np.full((6, 2), 0.6), AdhesionSpec("E3", 1.2), g)
    assert np.array_equal(tr.values[0], [0.37, 0.81])


def test_e3_constant_u_matches_implicit_solution():
    exact = scalar_e3_solution(1.0, 1.0, 1.0, 1.0)
    adh = AdhesionSpec("E3", 1.0)
    errs = []
    for n in (500, 1000):
        g = TimeGrid(1.0, n)
        errs.append(abs(picard_solve([1.0], np.ones((n + 1, 1)), adh, g).values[-1, 0] - exact))
    assert errs[1] <= 1e-6
    assert errs[0] / errs[1] >= 3.5
    g = TimeGrid(1.0, 1000)
    assert abs(rk4_integrate([1.0], np.ones((1001, 1)), adh, g).values[-1, 0] - exact) <= 1e-9


def test_rk4_fourth_order():
    exact = scalar_e3_solution(0.8, 1.0, 1.2, 1.0)
    adh = AdhesionSpec("E3", 1.0)
    e = [abs(rk4_integrate([0.8], 1.2, adh, TimeGrid(1.0, n)).values[-1, 0] - exact) for n in (10, 20)]
    assert e[0] / e[1] > 12


@pytest.mark.parametrize("law", ["E1", "E1_ED0", "E2", "E3"])
def test_picard_agrees_with_rk4(law):
    g = TimeGrid(1.0, 200)
    t = g.nodes[:, None]
    u = 0.5 + 0.4 * np.sin(3 * t + np.array([0.0, 1.0, 2.0]))
    adh = AdhesionSpec(law, 0.8, 0.0 if law == "E1_ED0" else 0.1)
    p = picard_solve([0.9, 0.6, 0.3], u, adh, g, tol=1e-13)
    r = rk4_integrate([0.9, 0.6, 0.3], u, adh, g)
    assert np.max(np.abs(p.values - r.values)) <= max(1e-12, 2.0 * g.dt ** 2)


def test_weighted_norm_contracts():
    g = TimeGrid(1.0, 50)
    tr = picard_solve([0.9], np.full((51, 1), 1.5), AdhesionSpec("E1_ED0", 2.0), g, tol=1e-14)
    w = np.array(tr.weighted_increments)
    w = w[w > 1e-13]
    assert np.all(w[1:] / w[:-1] <= 0.75)
    assert tr.omega == pytest.approx(2 * tr.lipschitz)
    assert tr.contraction_ratio < 1


@pytest.mark.parametrize("law", ["E1_ED0", "E2", "E3"])
def test_box_and_monotone_within_safe_horizon(law, rng):
    u = rng.uniform(-1, 1, (1, 6)) * np.ones((41, 1))
    beta0 = rng.uniform(0.2, 0.9, 6)
    adh = AdhesionSpec(law, 1.0, 0.0 if law == "E1_ED0" else 0.05)
    T = safe_horizon(beta0, u, adh)
    b = picard_solve(beta0, u, adh, TimeGrid(T, 40)).values
    assert b.min() >= 0 and b.max() <= 1
    assert np.all(np.diff(b, axis=0) <= 1e-12)


def test_safe_horizon_formula():
    adh = AdhesionSpec("E1_ED0", 2.0)
    assert safe_horizon([0.4, 0.8], np.array([[0.5, -1.0]]), adh) == pytest.approx(0.4 / (2 * 2 * 1.0))
    assert safe_horizon([0.4], np.zeros((3, 1)), adh) == math.inf


def test_budget_error():
    g = TimeGrid(1.0, 10)
    with pytest.raises(BondingError, match="did not converge"):
        picard_solve([0.5], np.full((11, 1), 2.0), AdhesionSpec("E1_ED0", 3.0), g, tol=1e-15, max_iter=3)


def test_shape_mismatch():
    with pytest.raises(ValueError):
        picard_solve([0.5, 0.5], np.ones((4, 3)), AdhesionSpec("E1_ED0", 1.0), TimeGrid(1.0, 3))


def test_clip_flag_recorded():
    g = TimeGrid(1.0, 10)
    tr = picard_solve([1.0], np.zeros((11, 1)), AdhesionSpec("E1", 0.0, 0.5), g, clip_beta_box=True)
    assert tr.clipped and tr.values.max() == 1.0
