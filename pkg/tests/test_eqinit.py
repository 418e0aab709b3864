import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from nsmpc import augment
from nsmpc.bench import gen_mass_spring
from nsmpc.eqinit import (_banded_qr, _banded_solve, _banded_solve_T, StructuredQrAe,
                          factorize_Ae, recover_equality_duals, solve_feasible_point)
from nsmpc.ipm import NullSpaceSolver, SolverOptions
from nsmpc.problem import MpcProblem, assemble_qp, bound_constraints
from nsmpc.reference import ClassicalSolver

from conftest import double_integrator, random_problem

ROT = np.array([[np.cos(0.3), -np.sin(0.3)], [np.sin(0.3), np.cos(0.3)]])


def case_problem(case, T=6):
    if case == "P1":
        A, B = np.eye(2), np.eye(2)
    elif case == "P2":
        A, B = ROT, np.diag([1.0, 100.0])
    else:
        A, B = np.diag([1.0, 1e-3]) @ ROT, np.diag([1.0, 1e3])
    return MpcProblem(A_xe=A, B_ue=B, Q=np.eye(2), U_ctl=np.eye(2), T=T,
                      x0=np.array([1.0, -2.0]), c=np.array([0.3, 0.1]))


def feas(qp, y):
    return np.abs(qp.Ae_mul(y) - qp.b_e).max() / (1 + np.abs(qp.b_e).max())


@pytest.mark.parametrize("case", ["P1", "P2", "P3"])
def test_case_selection_and_feasibility(case):
    prob = case_problem(case)
    aug = augment.build(prob.B_ue)
    fac = factorize_Ae(aug, prob.A_xe, prob.T)
    assert fac.case == case
    qp = assemble_qp(prob, aug)
    y = solve_feasible_point(fac, qp.b_e)
    assert feas(qp, y) <= 1e-9
    # compare with a dense least-squares oracle: same residual, both exact
    y_ls = np.linalg.lstsq(qp.dense_Ae(), qp.b_e, rcond=None)[0]
    assert feas(qp, y_ls) <= 1e-9
    assert fac.n_feasible_solves == 1


def test_case_rules_follow_diag_ratios():
    aug = augment.build(np.diag([1.0, 100.0]))
    assert aug.kappa == pytest.approx(100.0)
    assert factorize_Ae(aug, ROT, 3).case == "P2"
    assert factorize_Ae(aug, ROT, 3, xi=1000.0).case == "P1"
    assert factorize_Ae(aug, np.diag([1.0, 1e3]), 3).case == "P3"
    fac = factorize_Ae(augment.build(np.eye(2)), np.eye(2), 3)
    assert fac.case == "P1" and fac.kappa_B == 1.0


def test_zero_rhs_gives_zero_point():
    for case in ("P1", "P2", "P3"):
        prob = case_problem(case)
        fac = factorize_Ae(augment.build(prob.B_ue), prob.A_xe, prob.T)
        assert not solve_feasible_point(fac, np.zeros(prob.T * 2)).any()


def test_identity_plant_feasible_start():
    prob = MpcProblem(A_xe=np.eye(3), B_ue=np.eye(3), Q=np.eye(3), U_ctl=np.eye(3), T=4,
                      x0=np.ones(3))
    aug = augment.build(prob.B_ue)
    qp = assemble_qp(prob, aug)
    y = solve_feasible_point(factorize_Ae(aug, prob.A_xe, prob.T), qp.b_e)
    assert np.array_equal(qp.Ae_mul(y), qp.b_e)


def test_mass_spring_feasible_start():
    prob = gen_mass_spring(6, 3, T=30)
    aug = augment.build(prob.B_ue)
    qp = assemble_qp(prob, aug)
    for xi in (10.0, 1.0, 1e6):
        fac = factorize_Ae(aug, prob.A_xe, prob.T, xi)
        y = solve_feasible_point(fac, qp.b_e)
        assert np.abs(qp.Ae_mul(y) - qp.b_e).max() <= 1e-10


@given(T=st.integers(1, 7), b=st.integers(1, 4), seed=st.integers(0, 2**32 - 1))
@settings(max_examples=30, deadline=None)
def test_banded_qr_solves(T, b, seed):
    rng = np.random.default_rng(seed)
    A = rng.standard_normal((b, b))
    fac = _banded_qr(StructuredQrAe("P3", 0.0, 0.0, 10.0, T, None, A))
    M = np.eye(T * b)
    for k in range(1, T):
        M[k * b:(k + 1) * b, (k - 1) * b:k * b] = -A
    rhs = rng.standard_normal((T, b))
    assert np.allclose(M @ _banded_solve(fac, rhs).ravel(), rhs.ravel(), atol=1e-9)
    assert np.allclose(M.T @ _banded_solve_T(fac, rhs).ravel(), rhs.ravel(), atol=1e-9)


@pytest.mark.parametrize("case", ["P1", "P2", "P3"])
def test_dual_recovery_construct_then_recover(case, rng):
    prob = case_problem(case, T=5)
    aug = augment.build(prob.B_ue)
    qp = assemble_qp(prob, aug)
    fac = factorize_Ae(aug, prob.A_xe, prob.T)
    lam = rng.standard_normal(qp.m_e)
    got = recover_equality_duals(fac, qp.AeT_mul(lam))
    assert np.allclose(got, lam, atol=1e-8 * max(1, np.abs(lam).max()))
    assert not recover_equality_duals(fac, np.zeros(qp.n)).any()


def test_dual_recovery_matches_classical_multipliers():
    prob = double_integrator(T=8, x0=(3.0, 1.0))
    opts = SolverOptions(recover_duals=True)
    ns = NullSpaceSolver(prob, opts).solve()
    cl = ClassicalSolver(prob).solve()
    assert ns.converged and cl.converged
    assert np.allclose(ns.lam_e, cl.lam_e, atol=1e-6)
