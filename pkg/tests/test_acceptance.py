"""Acceptance criteria, each run at its stated tolerance.

Every criterion is a plain function returning ``(passed, detail)``.  Under
pytest each becomes a test and the terminal summary prints one line per
criterion; ``python3 tests/test_acceptance.py`` prints the same lines.
"""
from __future__ import annotations

import math
import sys
import time

import numpy as np
import pytest

from arock.concurrent import run_concurrent
from arock.delays import DelayModel, tail_probability
from arock.engine import RunConfig, run_sequential_km, run_simulated
from arock.errors import DivergenceDetected, NonexpansivenessViolated
from arock.harness import auto_truncation, table2_rows
from arock.operators import (FixedPointProblem, OperatorSpec, check_nonexpansive, random_spd,
                             shipped_instances)
from arock.stepsize import (EpsilonSequence, generic_stochastic_h, largest_step,
                            lyapunov_coefficients, make_policy, power_law, stochastic_h_large,
                            stochastic_h_weak, weakest_condition)

RESULTS: dict[str, tuple[bool, str]] = {}


def record(name, passed, detail):
    RESULTS[name] = (bool(passed), detail)
    return bool(passed), detail


def psd_problem(n=100, seed=1):
    A = random_spd(n, cond=10.0, seed=seed)
    b = np.random.default_rng(seed + 1).standard_normal(n)
    return FixedPointProblem(OperatorSpec.linear_psd(A, b, M=float(np.linalg.eigvalsh(A).max())))


# 1 ------------------------------------------------------------------------

def ac1(group):
    t0 = time.perf_counter()
    taus = (1, 2, 4, 8) if group in ("bounded", "uniform") else ()
    rs = (0.25, 0.5, 0.9) if group == "geometric" else ()
    bad = []
    for m in (16, 100, 10**4):
        for row in table2_rows(m, taus=taus, r_values=rs):
            if row.distribution == group and not row.holds:
                bad.append(f"m={m} {row.parameter:g}: h={row.h:.6f} < {row.bound:.6f}")
    dt = time.perf_counter() - t0
    ok = not bad and dt < 1.0
    detail = f"{group} rows, {dt:.2f}s" + ("" if not bad else "; below bound: " + "; ".join(bad[:3])
                                           + (f" (+{len(bad) - 3} more)" if len(bad) > 3 else ""))
    return record(f"AC1 table of step sizes [{group}]", ok, detail)


# 2 ------------------------------------------------------------------------

def ac2():
    worst = 0.0
    literal_gap = math.inf
    for m in (16, 100, 10**4):
        for r in (0.25, 0.5, 0.9):
            tail = tail_probability(DelayModel.geometric(m, r, C=1.0))
            hw, K = auto_truncation(lambda K: stochastic_h_weak(tail, m, K))
            hl, K2 = auto_truncation(lambda K: stochastic_h_large(tail, m, K))
            worst = max(worst, abs(generic_stochastic_h(weakest_condition(tail, m, K), tail, m, K) - hw),
                        abs(generic_stochastic_h(largest_step(tail, m, K2), tail, m, K2) - hl))
            # the same choice with the exponent of sqrt(m) flipped does not reproduce the closed form
            lit = EpsilonSequence(lambda l, t=tail, m=m: m ** -0.5 * t(l) ** -0.5, "literal", K2)
            with np.errstate(divide="ignore"):
                literal_gap = min(literal_gap, abs(generic_stochastic_h(lit, tail, m, K2) - hl))
    ok = worst <= 1e-12 and literal_gap > 1e-3
    return record("AC2 canonical parameters reproduce closed forms", ok,
                  f"max |diff| = {worst:.2e}; flipped-exponent variant differs by >= {literal_gap:.3f}")


# 3 ------------------------------------------------------------------------

def adversarial_schedule(m, n=500, jmax=20, seed=0):
    rng = np.random.default_rng(seed)
    rows = []
    for k in range(n):
        j = jmax if k % 50 == 0 else int(rng.integers(0, jmax + 1))
        t = rng.integers(0, min(j, 3) + 1, size=m)
        t[rng.integers(m)] = 0
        rows.append(j - t)
    return np.array(rows)


def ac3():
    t0 = time.perf_counter()
    runs, worst, fails = 0, math.inf, []
    for kind in ("grad_quadratic", "forward_backward"):
        for m in (2, 4, 8):
            op = shipped_instances(n=m, seed=m)[kind]
            x0 = 5 * np.random.default_rng(m).standard_normal(m)
            geo = DelayModel.geometric(m, 0.5)
            setups = [
                (geo, make_policy("stochastic_large", 0.9, m, tail=tail_probability(geo))),
                (DelayModel.from_schedule(adversarial_schedule(m)),
                 make_policy("generic_deterministic", 0.9, m, epsilon="powerlaw")),
            ]
            for model, pol in setups:
                tr = run_simulated(RunConfig(FixedPointProblem(op), model, pol, 10**4, x0=x0, seed=runs,
                                             check_descent=True, descent_action="record", metrics_every=100))
                runs += 1
                worst = min(worst, tr.min_slack)
                if tr.violations:
                    fails.append(f"{kind} m={m} {model.kind}: {len(tr.violations)} violations")
    dt = time.perf_counter() - t0
    ok = not fails and dt < 30
    return record("AC3 exact descent verification", ok,
                  f"{runs} runs x 1e4 steps, min slack {worst:.2e}, {dt:.1f}s" + ("; " + "; ".join(fails) if fails else ""))


# 4 ------------------------------------------------------------------------

def ac4():
    op = OperatorSpec.linear_psd(np.eye(2), np.zeros(2), M=1.0)  # S = 2I
    pol = make_policy("generic_deterministic", 0.5, 2, epsilon="powerlaw")
    cfg = RunConfig(FixedPointProblem(op, np.zeros(2)), DelayModel.from_schedule([[1, 1]]), pol, 1000,
                    x0=[1.0, -0.5], check_descent=True, descent_action="record", eta_scale=3.0 / 0.5)
    try:
        tr = run_simulated(cfg)
    except DivergenceDetected as exc:  # the iteration blows up after the violations are logged
        tr = exc.trace
    first = tr.violations[0].k if tr.violations else None
    return record("AC4 falsification control", bool(tr.violations),
                  f"eta = 3h: {len(tr.violations)} violations, first at k={first}")


# 5 ------------------------------------------------------------------------

def ac5():
    pb = psd_problem()
    model = DelayModel.geometric(100, 0.5)
    pol = make_policy("stochastic_large", 0.9, 100, tail=tail_probability(model))
    t0 = time.perf_counter()
    tr = run_simulated(RunConfig(pb, model, pol, 10**6, metrics_every=1000, seed=0))
    dt = time.perf_counter() - t0
    first, last = tr.deciles()
    ok = tr.final_fpr <= 1e-6 and last < 1e-3 * first and dt < 60
    return record("AC5 convergence, unbounded stochastic delays", ok,
                  f"final ||Sx|| = {tr.final_fpr:.2e}, decile ratio {last / first:.1e}, {dt:.1f}s")


# 6 ------------------------------------------------------------------------

def spike_schedule(m, period=100, spike=50, base=3, seed=0):
    rng = np.random.default_rng(seed)
    rows = []
    for k in range(period):
        if k == 0:
            rows.append(np.full(m, spike))
        else:
            rows.append(rng.integers(0, base + 1, size=m))
    return np.array(rows)


def ac6():
    pb = psd_problem()
    model = DelayModel.from_schedule(spike_schedule(100))
    pol = make_policy("deterministic_adaptive", 0.9, 100, gamma=1.0)
    tr = run_simulated(RunConfig(pb, model, pol, 10**6, metrics_every=997, seed=0))
    q = tr.j <= 5
    fpr = tr.fpr[q]
    ratio = fpr[0] / max(fpr[-1], 1e-300)
    ok = q.sum() > 10 and ratio >= 1e3
    return record("AC6 convergence, deterministic spikes (Q_5)", ok,
                  f"{q.sum()} Q_5 rows, ||Sx|| {fpr[0]:.2e} -> {fpr[-1]:.2e} (x{ratio:.1e})")


# 7 ------------------------------------------------------------------------

def ac7():
    op = shipped_instances(16, seed=3)["forward_backward"]
    model = DelayModel.zero(16)
    pol = make_policy("stochastic_large", 0.9, 16, tail=tail_probability(model))
    cfg = RunConfig(FixedPointProblem(op), model, pol, 10**5, seed=11, x0=np.ones(16), metrics_every=1000)
    sim = run_simulated(cfg).x_final
    ref = run_sequential_km(cfg.problem, pol.eta(0), 10**5, seed=11, x0=np.ones(16))
    same = np.array_equal(sim, ref) and sim.tobytes() == ref.tobytes()
    return record("AC7 zero-delay reduction", same, "bit-identical over 1e5 steps" if same else
                  f"max diff {np.abs(sim - ref).max():.2e}")


# 8 ------------------------------------------------------------------------

def ac8():
    worst = {}
    for kind, op in shipped_instances(8).items():
        worst[kind] = check_nonexpansive(op, trials=1000, seed=0).max_ratio
    A = random_spd(8, cond=10, seed=0)
    under = OperatorSpec.grad_quadratic(A, np.zeros(8), L=0.5 * np.linalg.eigvalsh(A).max(), validate=False)
    try:
        check_nonexpansive(under, trials=1000, seed=0)
        caught = None
    except NonexpansivenessViolated as exc:
        caught = exc.ratio
    ok = all(v <= 1 + 1e-10 for v in worst.values()) and caught is not None
    return record("AC8 nonexpansiveness suite", ok,
                  f"max ratio {max(worst.values()):.6f} over {len(worst)} kinds; "
                  f"under-estimated L caught with ratio {caught if caught is None else f'{caught:.3f}'}")


# 9 ------------------------------------------------------------------------

def ac9():
    pb = psd_problem()
    model = DelayModel.geometric(100, 0.5)
    pol = make_policy("stochastic_large", 0.9, 100, tail=tail_probability(model))
    tr = run_concurrent(RunConfig(pb, model, pol, 10**6, mode="concurrent", workers=4, metrics_every=1000))
    info = tr.info
    ok = (tr.final_fpr <= 1e-6 and info["lost_updates"] == 0
          and sum(info["worker_updates"]) == info["global_counter"] == 10**6
          and tr.delays is not None and tr.delays.min() >= 0)
    return record("AC9 concurrent engine", ok,
                  f"p=4, final ||Sx|| = {tr.final_fpr:.2e}, updates {info['global_counter']}, "
                  f"lost {info['lost_updates']}, max measured delay {info['max_measured_delay']}, {tr.wall_time:.1f}s")


# 10 -----------------------------------------------------------------------

def ac10():
    worst = 0.0
    K = 1000
    for model in (DelayModel.geometric(16, 0.5), DelayModel.geometric(100, 0.25), DelayModel.uniform(16, 8),
                  DelayModel.bounded(64, 10)):
        tail = tail_probability(model)
        P = tail.values(K)
        for choice in (weakest_condition, largest_step):
            eps = choice(tail, model.m, K)
            c = lyapunov_coefficients(eps, tail, "stochastic", K)
            with np.errstate(invalid="ignore"):
                term = np.where(P > 0, eps.values(K) * P, 0.0)
            worst = max(worst, float(np.max(np.abs(c[1:] + term[:-1] - c[:-1]))))
    for gamma in (0.5, 1.0, 2.0):
        eps = power_law(gamma, 100, K)
        c = lyapunov_coefficients(eps, None, "deterministic", K)
        worst = max(worst, float(np.max(np.abs(c[1:] + eps.values(K)[:-1] - c[:-1]))))
    return record("AC10 coefficient recurrence", worst <= 1e-14, f"max residual {worst:.1e}")


# pytest wrappers ---------------------------------------------------------

@pytest.mark.parametrize("group", ["bounded", "uniform", "geometric"])
def test_ac1_table(group):
    ok, detail = ac1(group)
    assert ok, detail


def test_ac2_canonical_parameters():
    ok, detail = ac2()
    assert ok, detail


def test_ac3_descent():
    ok, detail = ac3()
    assert ok, detail


def test_ac4_falsification():
    ok, detail = ac4()
    assert ok, detail


def test_ac5_stochastic_convergence():
    ok, detail = ac5()
    assert ok, detail


def test_ac6_deterministic_convergence():
    ok, detail = ac6()
    assert ok, detail


def test_ac7_zero_delay():
    ok, detail = ac7()
    assert ok, detail


def test_ac8_nonexpansive():
    ok, detail = ac8()
    assert ok, detail


def test_ac9_concurrent():
    ok, detail = ac9()
    assert ok, detail


def test_ac10_recurrence():
    ok, detail = ac10()
    assert ok, detail


def summary_lines():
    return [f"{'PASS' if ok else 'FAIL'}  {name}: {detail}" for name, (ok, detail) in RESULTS.items()]


if __name__ == "__main__":
    for fn in (lambda: ac1("bounded"), lambda: ac1("uniform"), lambda: ac1("geometric"),
               ac2, ac3, ac4, ac5, ac6, ac7, ac8, ac9, ac10):
        ok, detail = fn()
        print(summary_lines()[-1], flush=True)
    sys.exit(0 if all(ok for ok, _ in RESULTS.values()) else 1)
