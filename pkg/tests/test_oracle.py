import math

import numpy as np
import pytest
import scipy.sparse as sp
from hypothesis import given, settings
from hypothesis import strategies as st

from antiplane.oracle import (MAX_THRESHOLDED, DenseInstance, brute_sign_pattern, fd_gradient_check,
                              scalar_e3_solution)
from antiplane.vi_solver import InnerProblem, optimality_measure, solve_inner


def random_instance(rng, n=6, m=None):
    B = rng.standard_normal((n, n))
    A = B @ B.T + n * np.eye(n) * 0.2
    tau = np.zeros(n)
    m = n if m is None else m
    tau[rng.choice(n, m, replace=False)] = rng.uniform(0, 1.5, m)
    return DenseInstance(A, rng.normal(0, 2, n), tau)


def test_separable_example():
    u = brute_sign_pattern(DenseInstance(np.diag([2.0, 2.0]), [3.0, 0.0], [1.0, 1.0]))
    assert np.allclose(u, [1.0, 0.0], atol=1e-14)


def test_zero_thresholds_give_linear_solve(rng):
    inst = random_instance(rng)
    inst.tau[:] = 0.0
    assert np.allclose(brute_sign_pattern(inst), np.linalg.solve(inst.A, inst.f), atol=1e-12)


def test_random_six_dof_matches_solver(rng):
    for _ in range(5):
        inst = random_instance(rng, 6)
        ref = brute_sign_pattern(inst)
        assert np.max(np.abs(solve_inner(inst.as_inner(), tol=1e-12).u - ref)) <= 1e-8


@settings(max_examples=30, deadline=None)
@given(seed=st.integers(0, 100_000), n=st.integers(1, 7))
def test_oracle_point_is_certified(seed, n):
    rng = np.random.default_rng(seed)
    inst = random_instance(rng, n, m=rng.integers(0, n + 1))
    u = brute_sign_pattern(inst)
    p = InnerProblem(sp.csr_matrix(inst.A), inst.f, inst.tau[inst.thresholded], inst.thresholded)
    assert optimality_measure(p, u) <= 1e-10


def test_enumeration_cap():
    n = MAX_THRESHOLDED + 1
    with pytest.raises(ValueError):
        brute_sign_pattern(DenseInstance(np.eye(n), np.ones(n), np.ones(n)))


def test_instance_validation():
    with pytest.raises(ValueError):
        DenseInstance(np.eye(2), [1.0, 1.0], [-1.0, 0.0])
    with pytest.raises(np.linalg.LinAlgError):
        DenseInstance(np.array([[1.0, 2.0], [2.0, 1.0]]), [1.0, 1.0], [0.0, 0.0])


def test_e3_scalar_examples():
    assert scalar_e3_solution(0.7, 1.0, 1.0, 0.0) == 0.7
    assert scalar_e3_solution(0.7, 0.0, 5.0, 3.0) == 0.7
    b = scalar_e3_solution(1.0, 1.0, 1.0, 1.0)
    assert b == pytest.approx(0.567143290, abs=1e-9)
    assert abs(math.log(b) + b) <= 1e-11


def test_e3_scalar_monotone(rng):
    for _ in range(50):
        b0, lam, u = rng.uniform(0.1, 1), rng.uniform(0.1, 2), rng.uniform(0.1, 2)
        t1, t2 = sorted(rng.uniform(0, 2, 2))
        assert scalar_e3_solution(b0, lam, u, t2) <= scalar_e3_solution(b0, lam, u, t1)
        assert scalar_e3_solution(b0, 2 * lam, u, t1 + 0.1) < scalar_e3_solution(b0, lam, u, t1 + 0.1)


def test_fd_gradient_quadratic(rng):
    inst = random_instance(rng, 5)
    inst.tau[:] = 0.0
    p = InnerProblem(sp.csr_matrix(inst.A), inst.f, [], [])
    assert fd_gradient_check(p, rng.standard_normal(5), h=1e-5) <= 1e-8


def test_fd_gradient_sliding_point(rng):
    # J is piecewise quadratic, so central differences are exact away from kinks
    # and the error sits at round-off level for both steps
    inst = random_instance(rng, 5)
    p = inst.as_inner()
    v = rng.uniform(0.5, 1.5, 5) * rng.choice([-1, 1], 5)
    for h in (1e-4, 5e-5):
        assert fd_gradient_check(p, v, h=h) <= 1e-7


def test_fd_gradient_kink_precondition(rng):
    inst = random_instance(rng, 3)
    v = np.array([0.0, 1.0, -1.0])
    with pytest.raises(ValueError):
        fd_gradient_check(inst.as_inner(), v)
