import numpy as np
import pytest
from hypothesis import given, strategies as st

from arock.blockvec import BlockLayout
from arock.errors import (BlockOutOfRange, InvalidBox, InvalidOperator, LayoutMismatch,
                          NegativeThreshold, NonexpansivenessViolated)
from arock.operators import (FixedPointProblem, OperatorSpec, check_nonexpansive, power_iteration,
                             proj_box, random_spd, shipped_instances, soft_threshold,
                             solve_reference, spectral_radius)


def test_soft_threshold_values():
    assert np.allclose(soft_threshold([3.0, -0.5, -2.0], 1.0), [2.0, 0.0, -1.0])
    with pytest.raises(NegativeThreshold):
        soft_threshold([1.0], -0.1)


def test_proj_box():
    assert np.allclose(proj_box([-2.0, 0.3, 5.0], -1.0, 1.0), [-1.0, 0.3, 1.0])
    with pytest.raises(InvalidBox):
        proj_box([0.0], 1.0, -1.0)


def test_power_iteration_matches_eigvalsh():
    A = random_spd(20, cond=50, seed=3)
    assert power_iteration(A) == pytest.approx(np.linalg.eigvalsh(A).max(), rel=1e-6)


def test_spectral_radius_nonsymmetric():
    B = np.array([[0.0, 2.0], [0.125, 0.0]])
    assert spectral_radius(B) == pytest.approx(0.5)


def test_S_equals_I_minus_T():
    for op in shipped_instances(6, seed=4).values():
        x = np.random.default_rng(0).standard_normal(6) * 3
        assert np.allclose(op.apply_S(x), x - op.apply_T(x), atol=1e-13)
        for i in range(op.m):
            assert np.allclose(op.apply_S_block(x, i), op.apply_S(x)[op.layout.block_slice(i)], atol=1e-13)


def test_linear_psd_two_identity():
    # A = I, M = 1 gives T = -I and S = 2I
    op = OperatorSpec.linear_psd(np.eye(2), np.zeros(2), M=1.0)
    assert op.fpr_norm(np.array([1.0, -2.0])) == pytest.approx(2 * np.sqrt(5))


def test_block_out_of_range():
    op = shipped_instances(4)["grad_quadratic"]
    with pytest.raises(BlockOutOfRange):
        op.apply_S_block(np.zeros(4), 4)


def test_validation_errors():
    A = random_spd(4, seed=1)
    lam = np.linalg.eigvalsh(A).max()
    with pytest.raises(InvalidOperator):
        OperatorSpec.grad_quadratic(A, np.zeros(4), L=0.5 * lam)
    with pytest.raises(InvalidOperator):
        OperatorSpec.grad_quadratic(A + np.triu(np.ones((4, 4)), 1), np.zeros(4), L=10 * lam)
    with pytest.raises(LayoutMismatch):
        OperatorSpec.linear_psd(A, np.zeros(3), M=lam)
    with pytest.raises(InvalidOperator):
        OperatorSpec.linear_jacobi(np.array([[0.0, 1.0], [1.0, 2.0]]), np.zeros(2))


def test_underestimated_L_is_caught_by_sampler():
    A = random_spd(6, cond=10, seed=2)
    lam = np.linalg.eigvalsh(A).max()
    op = OperatorSpec.grad_quadratic(A, np.zeros(6), L=0.4 * lam, validate=False)
    with pytest.raises(NonexpansivenessViolated) as info:
        check_nonexpansive(op, trials=1000, seed=0)
    assert info.value.ratio > 1


@pytest.mark.parametrize("kind", ["grad_quadratic", "forward_backward", "projected_box",
                                  "linear_psd", "linear_jacobi"])
def test_shipped_instances_nonexpansive(kind):
    rep = check_nonexpansive(shipped_instances(8)[kind], trials=1000, seed=1)
    assert rep.max_ratio <= 1 + 1e-10


@given(st.integers(0, 10_000))
def test_forward_backward_pair_property(seed):
    op = shipped_instances(5, seed=7)["forward_backward"]
    rng = np.random.default_rng(seed)
    x, y = rng.standard_normal(5) * 10, rng.standard_normal(5) * 10
    Tx, Ty = op.apply_T(x), op.apply_T(y)
    assert np.linalg.norm(Tx - Ty) <= np.linalg.norm(x - y) * (1 + 1e-12)


def test_solve_reference_fixed_point_and_problem_check():
    op = shipped_instances(8)["forward_backward"]
    xs = solve_reference(op, tol=1e-11)
    assert op.fpr_norm(xs) <= 1e-11
    FixedPointProblem(op, xs)
    with pytest.raises(InvalidOperator):
        FixedPointProblem(op, xs + 1.0)


def test_quadratic_solution_is_linear_solve():
    op = shipped_instances(8)["linear_psd"]
    xs = solve_reference(op, tol=1e-11)
    assert np.allclose(xs, np.linalg.solve(op.A, op.b), atol=1e-9)


def test_block_layout_operator():
    A = random_spd(6, seed=5)
    op = OperatorSpec.linear_psd(A, np.ones(6), M=np.linalg.eigvalsh(A).max(),
                                 layout=BlockLayout((2, 4)))
    assert op.m == 2
    assert op.apply_S_block(np.zeros(6), 1).shape == (4,)
