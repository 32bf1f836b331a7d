import numpy as np
import pytest

from arock.concurrent import run_concurrent
from arock.delays import DelayModel, tail_probability
from arock.engine import BlockSampler, RunConfig, run_km_reference, run_sequential_km, run_simulated, streams
from arock.errors import DescentViolated, DivergenceDetected, InvalidParameters
from arock.operators import FixedPointProblem, OperatorSpec, random_spd, shipped_instances
from arock.stepsize import make_policy


def halving(m=1):
    return FixedPointProblem(OperatorSpec.linear_psd(np.eye(m), np.zeros(m), M=1.0), np.zeros(m))


def test_hand_iteration_zero_delay():
    tr = run_simulated(RunConfig(halving(), DelayModel.zero(1), 0.25, 3, x0=[1.0]))
    assert tr.x_final[0] == 0.125
    assert np.allclose(tr.fpr, [2.0, 1.0, 0.5])


def test_hand_iteration_delay_one():
    sched = DelayModel.from_schedule([[1]])
    xs = [run_simulated(RunConfig(halving(), sched, 0.25, n, x0=[1.0])).x_final[0] for n in (1, 2, 3)]
    assert xs == [0.5, 0.0, -0.25]


def test_identical_seeds_bit_identical():
    op = shipped_instances(6)["forward_backward"]
    model = DelayModel.geometric(6, 0.6)
    pol = make_policy("stochastic_weak", 0.8, 6, tail=tail_probability(model))
    cfg = lambda s: RunConfig(FixedPointProblem(op), model, pol, 3000, seed=s, x0=np.ones(6))
    a, b, c = run_simulated(cfg(9)), run_simulated(cfg(9)), run_simulated(cfg(10))
    assert np.array_equal(a.x_final, b.x_final) and np.array_equal(a.fpr, b.fpr)
    assert not np.array_equal(a.x_final, c.x_final)


def test_one_block_changes_per_step():
    op = shipped_instances(5)["projected_box"]
    model = DelayModel.uniform(5, 3)
    pol = make_policy("stochastic_large", 0.9, 5, tail=tail_probability(model))
    prev = np.full(5, 0.7)
    for n in range(1, 40):
        x = run_simulated(RunConfig(FixedPointProblem(op), model, pol, n, seed=3, x0=np.full(5, 0.7))).x_final
        assert np.count_nonzero(x != prev) <= 1
        prev = x


def test_zero_delay_equals_sequential_km():
    op = shipped_instances(10)["linear_jacobi"]
    cfg = RunConfig(FixedPointProblem(op), DelayModel.zero(10), 0.6, 20_000, seed=4, x0=np.ones(10))
    assert np.array_equal(run_simulated(cfg).x_final,
                          run_sequential_km(cfg.problem, 0.6, 20_000, seed=4, x0=np.ones(10)))


def test_block_sampler_uniform():
    s = BlockSampler(4, streams(0)[0])
    counts = np.bincount([s.next() for _ in range(40_000)], minlength=4)
    assert np.all(np.abs(counts / 40_000 - 0.25) < 3 * np.sqrt(0.25 * 0.75 / 40_000))


def test_divergence_guard_keeps_partial_trace():
    cfg = RunConfig(halving(2), DelayModel.zero(2), 5.0, 10_000, x0=[1.0, 1.0])
    with pytest.raises(DivergenceDetected) as info:
        run_simulated(cfg)
    assert info.value.trace is not None and info.value.trace.updates < 10_000


def test_descent_violation_raises():
    pol = make_policy("generic_deterministic", 0.5, 2, epsilon="powerlaw")
    cfg = RunConfig(halving(2), DelayModel.from_schedule([[1, 1]]), pol, 1000, x0=[1.0, -0.5],
                    check_descent=True, eta_scale=6.0)
    with pytest.raises(DescentViolated):
        run_simulated(cfg)


def test_config_validation():
    with pytest.raises(InvalidParameters):
        RunConfig(halving(2), DelayModel.zero(3), 0.5, 10)
    with pytest.raises(InvalidParameters):
        RunConfig(halving(2), DelayModel.zero(2), 0.5, 0)
    with pytest.raises(InvalidParameters):
        RunConfig(halving(2), DelayModel.zero(2), 0.5, 10, mode="gpu")


def test_cadence_row_count():
    tr = run_simulated(RunConfig(halving(2), DelayModel.zero(2), 0.3, 1000, metrics_every=7, x0=[1.0, 1.0]))
    assert len(tr) == 1000 // 7
    assert np.all(np.diff(tr.k) > 0)


def test_km_reference():
    tr = run_km_reference(RunConfig(halving(3), DelayModel.zero(3), 0.5, 1, x0=[1.0, -2.0, 4.0]))
    assert np.array_equal(tr.x_final, np.zeros(3))
    A = random_spd(12, cond=20, seed=1)
    op = OperatorSpec.grad_quadratic(A, np.ones(12), L=np.linalg.eigvalsh(A).max())
    tr = run_km_reference(RunConfig(FixedPointProblem(op), DelayModel.zero(12), 0.5, 300, x0=np.zeros(12)))
    assert np.all(np.diff(tr.fpr) <= 1e-12)


def test_concurrent_single_worker():
    op = shipped_instances(6)["linear_psd"]
    model = DelayModel.geometric(6, 0.5)
    pol = make_policy("stochastic_large", 0.9, 6, tail=tail_probability(model))
    tr = run_concurrent(RunConfig(FixedPointProblem(op), model, pol, 2000, mode="concurrent", workers=1))
    assert tr.info["lost_updates"] == 0 and tr.updates == 2000
    assert set(np.unique(tr.delays)) <= {0, 1}


def test_concurrent_workers_accounting():
    op = shipped_instances(8)["linear_psd"]
    model = DelayModel.geometric(8, 0.5)
    pol = make_policy("deterministic_adaptive", 0.9, 8)
    tr = run_concurrent(RunConfig(FixedPointProblem(op), model, pol, 20_000, mode="concurrent",
                                  workers=3, metrics_every=10, seed=5))
    assert sum(tr.info["worker_updates"]) == tr.info["global_counter"] == 20_000
    assert tr.delays.min() >= 0
    assert tr.j.max() <= tr.info["max_measured_delay"]
    first, last = tr.deciles()
    assert last < first
