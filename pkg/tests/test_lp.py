import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from trajpriv.lp import LinearProgram, solve, verify
from trajpriv._validation import ValidationError

from oracles import vertex_enumeration


def random_lp(rng, n=None, m_ub=None, m_eq=None):
    n = n or int(rng.integers(1, 7))
    m_eq = int(rng.integers(0, 3)) if m_eq is None else m_eq
    m_eq = min(m_eq, n)
    m_ub = int(rng.integers(1, 9 - m_eq)) if m_ub is None else m_ub
    A_ub = rng.uniform(-1, 1, size=(m_ub, n)).round(2)
    b_ub = rng.uniform(-0.5, 2, size=m_ub).round(2)
    A_ub[0] = 1.0  # bounded region
    b_ub[0] = rng.uniform(1, 5)
    A_eq = rng.uniform(-1, 1, size=(m_eq, n)).round(2)
    b_eq = rng.uniform(0, 1, size=m_eq).round(2)
    c = rng.uniform(-1, 1, size=n).round(2)
    return LinearProgram(n, c, A_ub, b_ub, A_eq, b_eq)


def test_single_bound():
    sol = solve(LinearProgram.from_rows([1.0], ineq=[([1.0], 1.0)]))
    assert sol.status == "optimal"
    assert sol.x[0] == pytest.approx(1.0)
    assert sol.objective_value == pytest.approx(1.0)
    assert sol.duals_ineq[0] == pytest.approx(1.0)


def test_degenerate_optimum_set():
    sol = solve(LinearProgram.from_rows([1.0, 1.0], ineq=[([1.0, 1.0], 1.0)]))
    assert sol.status == "optimal"
    assert sol.objective_value == pytest.approx(1.0)
    assert verify(LinearProgram.from_rows([1.0, 1.0], ineq=[([1.0, 1.0], 1.0)]), sol)["max_residual"] <= 1e-8


def test_infeasible_and_unbounded():
    infeasible = LinearProgram.from_rows([1.0], ineq=[([1.0], -1.0)])
    assert solve(infeasible).status == "infeasible"
    unbounded = LinearProgram.from_rows([1.0, 0.0], ineq=[([-1.0, 1.0], 1.0)])
    assert solve(unbounded).status == "unbounded"
    with pytest.raises(ValueError):
        verify(infeasible, solve(infeasible))


def test_equalities_and_negative_rhs():
    # max x + 2y s.t. x + y = 1, x >= 0.25 (as -x <= -0.25)
    lp = LinearProgram.from_rows([1.0, 2.0], ineq=[([-1.0, 0.0], -0.25)], eq=[([1.0, 1.0], 1.0)])
    sol = solve(lp)
    assert sol.status == "optimal"
    np.testing.assert_allclose(sol.x, [0.25, 0.75], atol=1e-12)
    assert verify(lp, sol)["max_residual"] <= 1e-10


def test_redundant_equalities():
    lp = LinearProgram.from_rows([1.0, 1.0], eq=[([1.0, 1.0], 1.0), ([2.0, 2.0], 2.0)],
                                 ineq=[([1.0, 0.0], 0.3)])
    sol = solve(lp)
    assert sol.status == "optimal"
    assert sol.objective_value == pytest.approx(1.0)
    assert verify(lp, sol)["max_residual"] <= 1e-10


def test_dimension_mismatch():
    with pytest.raises(ValidationError):
        LinearProgram(2, [1.0, 1.0], [[1.0]], [1.0])
    with pytest.raises(ValidationError):
        LinearProgram(1, [1.0], [[1.0]], [1.0, 2.0])


def test_perturbed_solution_flagged():
    lp = LinearProgram.from_rows([1.0, 1.0], ineq=[([1.0, 2.0], 2.0), ([3.0, 1.0], 3.0)])
    sol = solve(lp)
    assert verify(lp, sol)["max_residual"] <= 1e-10
    sol.x = sol.x + 0.01
    assert verify(lp, sol)["max_residual"] > 1e-8


def test_matches_vertex_enumeration():
    rng = np.random.default_rng(7)
    for _ in range(60):
        lp = random_lp(rng)
        sol = solve(lp)
        best, _ = vertex_enumeration(lp.objective, lp.A_ub, lp.b_ub, lp.A_eq, lp.b_eq)
        if best is None:
            assert sol.status == "infeasible"
        else:
            assert sol.status == "optimal"
            assert sol.objective_value == pytest.approx(best, abs=1e-8)
            assert verify(lp, sol)["max_residual"] <= 1e-8


def test_row_and_variable_permutation_invariance():
    rng = np.random.default_rng(3)
    checked = 0
    while checked < 20:
        lp = random_lp(rng, m_eq=0)
        sol = solve(lp)
        if sol.status != "optimal":
            continue
        rp = rng.permutation(lp.n_ineq)
        cp = rng.permutation(lp.n_vars)
        perm = LinearProgram(lp.n_vars, lp.objective[cp], lp.A_ub[rp][:, cp], lp.b_ub[rp])
        assert solve(perm).objective_value == pytest.approx(sol.objective_value, abs=1e-8)
        checked += 1


@settings(max_examples=40, deadline=None)
@given(seed=st.integers(0, 2**32 - 1), scale=st.floats(0.1, 10.0))
def test_row_scaling_scales_dual(seed, scale):
    rng = np.random.default_rng(seed)
    n = 3
    A = rng.uniform(0.1, 1.0, size=(3, n))
    b = rng.uniform(0.5, 2.0, size=3)
    c = rng.uniform(0.1, 1.0, size=n)
    lp = LinearProgram(n, c, A, b)
    sol = solve(lp)
    A2, b2 = A.copy(), b.copy()
    A2[1] *= scale
    b2[1] *= scale
    sol2 = solve(LinearProgram(n, c, A2, b2))
    assert sol2.objective_value == pytest.approx(sol.objective_value, abs=1e-8)
    # duals are unique for generic data with a nondegenerate optimum
    y = sol.duals_ineq.copy()
    y[1] /= scale
    assert sol2.duals_ineq @ b2 == pytest.approx(sol.duals_ineq @ b, abs=1e-8)
    np.testing.assert_allclose(sol2.duals_ineq, y, atol=1e-8)


def test_dump_lists_rows():
    lp = LinearProgram.from_rows([1.0, 0.0], ineq=[([1.0, 1.0], 2.0)], eq=[([0.0, 1.0], 1.0)],
                                 var_names=["a", "b"])
    text = lp.dump()
    assert "maximize  +1*a" in text
    assert "u0: +1*a +1*b <= 2" in text
    assert "e0: +1*b = 1" in text
