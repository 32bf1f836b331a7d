"""ARock: asynchronous randomized block-coordinate fixed-point iterations.

Submodules
----------
blockvec     block layouts and the bounded iterate history
operators    nonexpansive operators ``T`` and residuals ``S = I - T``
delays       stochastic delay laws and deterministic schedules
stepsize     step-size policies, parameter sequences, Lyapunov coefficients
lyapunov     Lyapunov function and exact expected-descent checks
engine       seeded simulator and KM baselines
concurrent   shared-memory threaded engine
harness      configs, trace files, the step-size table
"""
from .blockvec import BlockLayout, IterateHistory, as_block_vector, current_delay, distance
from .delays import DelayModel, DelaySampler, TailDistribution, sample_delay_vector, tail_probability
from .engine import BlockSampler, RunConfig, Trace, run, run_km_reference, run_sequential_km, run_simulated
from .concurrent import run_concurrent
from .lyapunov import (LyapunovState, check_descent, check_expected_descent, exact_expected_next,
                       fpr_norm, lyapunov_value)
from .operators import (FixedPointProblem, OperatorSpec, check_nonexpansive, shipped_instances,
                        solve_reference)
from .stepsize import (EpsilonSequence, StepSizePolicy, bounded_truncated_eta, deterministic_eta,
                       generic_deterministic_h, generic_stochastic_h, lyapunov_coefficients,
                       make_policy, stochastic_h_large, stochastic_h_weak)

__version__ = "0.1.0"
