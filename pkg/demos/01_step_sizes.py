"""
How large can the step be?
==========================

The admissible step size of an asynchronous run depends on how stale the
reads get.  This script prints the step-size table for a few delay laws and
then shows how the choice of the weights ``eps_l`` moves the result.
"""

import numpy as np

from arock import DelayModel, tail_probability
from arock.harness import table2_report
from arock.stepsize import (custom, generic_stochastic_h, largest_step, power_law, stochastic_h_large,
                            stochastic_h_weak, weakest_condition, deterministic_eta)

# The full table for m = 100 blocks.  The uniform rows print below their
# reference bound: that bound is too optimistic for a uniform delay law.
text, rows = table2_report(100)
print(text)
print()

# A geometric delay law: P[j >= l] decays like r^l.
m = 100
tail = tail_probability(DelayModel.geometric(m, 0.5, C=1.0))
K = 2000
print("geometric r=0.5, m=100")
print("  weak condition      h =", round(stochastic_h_weak(tail, m, K), 6))
print("  largest step        h =", round(stochastic_h_large(tail, m, K), 6))

# Both closed forms come out of one generic formula once eps is chosen.
for name, eps in [("weakest", weakest_condition(tail, m, K)), ("largest", largest_step(tail, m, K))]:
    print(f"  generic, {name:8s}  h =", round(generic_stochastic_h(eps, tail, m, K), 6))

# Constant weights are a poorer choice: they ignore how fast the tail decays.
flat = custom(np.full(60, np.sqrt(m)), K)
print("  generic, flat      h =", round(generic_stochastic_h(flat, tail, m, K), 6))
print()

# Without a probabilistic model, the step must shrink with the current delay j.
print("deterministic delays, c=0.9, gamma=1")
for j in (0, 1, 5, 20, 50):
    print(f"  j={j:3d}  eta = {deterministic_eta(j, 0.9, 1.0, m):.3e}")
eps = power_law(1.0, m, K)
print("  sum of power-law eps (with analytic tail):", round(float(eps.values(K).sum() + eps.tail_sum(K)), 4))
