"""
A delayed run on a small quadratic, with the descent checked every step
========================================================================

We minimise 0.5 x'Ax - b'x through the gradient-step operator, simulate
unbounded random delays and, at every step, evaluate the expected next value
of the Lyapunov function exactly (all m block choices are enumerated).
"""

import numpy as np

from arock import (DelayModel, FixedPointProblem, RunConfig, make_policy, run_simulated,
                   shipped_instances, tail_probability)

m = 6
op = shipped_instances(n=m, seed=4)["grad_quadratic"]
problem = FixedPointProblem(op)

delays = DelayModel.geometric(m, 0.6)
policy = make_policy("stochastic_large", 0.9, m, tail=tail_probability(delays))
print(f"step size eta = {policy.eta(0):.4f}")

x0 = 3 * np.random.default_rng(0).standard_normal(m)
cfg = RunConfig(problem, delays, policy, iterations=5000, x0=x0, seed=7,
                check_descent=True, descent_action="record", metrics_every=500)
trace = run_simulated(cfg)

print(" step    delay   ||x - Tx||")
for k, j, r in zip(trace.k, trace.j, trace.fpr):
    print(f"{k:5d} {j:8d}   {r:.3e}")
print(f"violations: {len(trace.violations)}, smallest slack: {trace.min_slack:.3e}")

# Triple the step and the inequality breaks almost at once.
loud = RunConfig(problem, delays, policy, iterations=200, x0=x0, seed=7,
                 check_descent=True, descent_action="record", eta_scale=3.0)
try:
    bad = run_simulated(loud)
    print("eta x3: violations =", len(bad.violations))
except Exception as exc:  # the run may also blow up
    print("eta x3:", type(exc).__name__, "after", len(exc.trace.violations), "violations")
