import math

import numpy as np
import pytest
from scipy.optimize import linprog

from rsmakit.ipm import BarrierOptions, ConvexProgram, InfeasibleStart, barrier_solve


def test_linear_program_matches_linprog():
    rng = np.random.default_rng(0)
    n, m = 5, 12
    A = rng.standard_normal((m, n))
    b = np.abs(rng.standard_normal(m)) + 1.0  # x = 0 is strictly feasible
    A = np.vstack([A, np.eye(n), -np.eye(n)])
    b = np.concatenate([b, 10 * np.ones(2 * n)])
    c = rng.standard_normal(n)
    res = barrier_solve(ConvexProgram(c, lin_A=A, lin_b=b), np.zeros(n))
    ref = linprog(c, A_ub=A, b_ub=b, bounds=[(None, None)] * n)
    assert res.converged
    assert res.objective == pytest.approx(ref.fun, abs=1e-6)
    assert res.gap <= 1e-7


def test_ball_constraint():
    c = np.array([3.0, -4.0])
    prog = ConvexProgram(c, quad_Q=np.eye(2)[None], quad_q=np.zeros((1, 2)), quad_r=np.array([-1.0]))
    res = barrier_solve(prog, np.zeros(2))
    np.testing.assert_allclose(res.x, -c / 5.0, atol=1e-6)
    assert res.objective == pytest.approx(-5.0, abs=1e-6)


def test_log_constraint():
    # maximize x0 subject to x0 <= 2 log(1 + x1), x1 <= e - 1
    prog = ConvexProgram(
        np.array([-1.0, 0.0]),
        lin_A=np.array([[0.0, 1.0]]), lin_b=np.array([math.e - 1.0]),
        log_L=np.array([[1.0, 0.0]]), log_d=np.zeros(1), log_idx=[1], log_kappa=np.array([2.0]),
    )
    res = barrier_solve(prog, np.array([-1.0, 0.0]))
    assert res.x[0] == pytest.approx(2.0, abs=1e-6)
    assert prog.max_violation(res.x) < 0


def test_infeasible_start_rejected():
    prog = ConvexProgram(np.ones(1), lin_A=np.ones((1, 1)), lin_b=np.zeros(1))
    with pytest.raises(InfeasibleStart):
        barrier_solve(prog, np.array([0.0]))


def test_log_domain_outside_is_violation():
    prog = ConvexProgram(np.zeros(1), log_L=np.zeros((1, 1)), log_d=np.zeros(1),
                         log_idx=[0], log_kappa=np.ones(1))
    assert prog.max_violation(np.array([-2.0])) == math.inf


def test_options_respected():
    c = np.array([1.0, 1.0])
    prog = ConvexProgram(c, quad_Q=np.eye(2)[None], quad_q=np.zeros((1, 2)), quad_r=np.array([-1.0]))
    loose = barrier_solve(prog, np.zeros(2), BarrierOptions(gap_tol=1e-2))
    tight = barrier_solve(prog, np.zeros(2), BarrierOptions(gap_tol=1e-10))
    assert loose.gap <= 1e-2 and tight.gap <= 1e-10
    assert tight.objective <= loose.objective + 1e-12
    assert tight.objective == pytest.approx(-math.sqrt(2.0), abs=1e-9)
