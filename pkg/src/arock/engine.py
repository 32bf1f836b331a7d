"""Seeded single-threaded ARock simulator and the KM baselines.

The simulator injects delays: at step ``k`` it draws the block ``i(k)``
uniformly, draws a delay vector from the configured model, assembles the
stale read ``xhat = x^{k - j(k)}`` blockwise and applies

    x^{k+1}_i = x^k_i - eta^k S_i(xhat)        (all other blocks copied).

Random streams are derived from one master seed with
``numpy.random.SeedSequence(seed).spawn(2)``: the first child drives the
block index, the second the delays.  The same seed therefore reproduces a
run bit for bit.
"""
from __future__ import annotations

import math
import time
from dataclasses import dataclass, field

import numpy as np

from .blockvec import IterateHistory, as_block_vector
from .delays import DelayModel, DelaySampler
from .errors import DescentViolated, DivergenceDetected, InvalidParameters
from .lyapunov import LyapunovState, check_descent, lyapunov_value
from .operators import FixedPointProblem, solve_reference
from .stepsize import StepSizePolicy

DIVERGENCE_LIMIT = 1e12


def streams(seed: int, n: int = 2) -> list[np.random.Generator]:
    """Independent generators split from one master seed."""
    return [np.random.default_rng(s) for s in np.random.SeedSequence(seed).spawn(n)]


class BlockSampler:
    """Uniform IID block indices in ``0..m-1``, drawn in chunks."""

    def __init__(self, m: int, rng: np.random.Generator | int | None = None, chunk: int = 8192):
        self.m = int(m)
        self.rng = rng if isinstance(rng, np.random.Generator) else np.random.default_rng(rng)
        self.chunk = chunk
        self._buf = np.zeros(0, dtype=np.int64)
        self._pos = 0

    def next(self) -> int:
        if self._pos >= self._buf.size:
            self._buf = self.rng.integers(0, self.m, size=self.chunk)
            self._pos = 0
        i = self._buf[self._pos]
        self._pos += 1
        return int(i)


@dataclass
class RunConfig:
    """Everything needed to reproduce one run.

    ``policy`` is either a :class:`StepSizePolicy` or a constant step size.
    The applied step is ``eta_scale * policy.eta(j(k))``; ``eta_scale > 1``
    is only meant for falsification experiments.
    """

    problem: FixedPointProblem
    delays: DelayModel
    policy: StepSizePolicy | float
    iterations: int
    seed: int = 0
    mode: str = "simulated"
    workers: int = 1
    metrics_every: int = 1
    x0: np.ndarray | None = None
    check_descent: bool = False
    descent_action: str = "raise"   # or "record"
    record_xi: bool = False
    lyapunov_truncation: int | None = None
    window: int | None = None
    eta_scale: float = 1.0

    def __post_init__(self):
        if self.iterations < 1:
            raise InvalidParameters("iterations must be >= 1")
        if self.workers < 1:
            raise InvalidParameters("workers must be >= 1")
        if self.metrics_every < 1:
            raise InvalidParameters("metrics_every must be >= 1")
        if self.mode not in ("simulated", "concurrent"):
            raise InvalidParameters(f"mode must be 'simulated' or 'concurrent', got {self.mode!r}")
        if self.descent_action not in ("raise", "record"):
            raise InvalidParameters("descent_action must be 'raise' or 'record'")
        if self.delays.m != self.problem.op.m:
            raise InvalidParameters(f"delay model has m={self.delays.m}, operator has m={self.problem.op.m}")
        if not isinstance(self.policy, StepSizePolicy):
            eta = float(self.policy)
            if not eta > 0:
                raise InvalidParameters("a constant step size must be positive")

    def step(self, j: int) -> float:
        p = self.policy
        eta = p.eta(j) if isinstance(p, StepSizePolicy) else float(p)
        return self.eta_scale * eta

    def initial_point(self) -> np.ndarray:
        layout = self.problem.op.layout
        if self.x0 is None:
            return np.zeros(layout.N)
        return as_block_vector(self.x0, layout)


@dataclass
class Trace:
    """Recorded rows of a run (one per metrics-cadence step) plus the final state.

    Row ``r`` describes step ``k[r]``: the chosen block, the current delay,
    the step size, and ``||S x^k||``, ``||x^k - x*||`` and ``xi^k`` measured
    at the iterate the step started from (``nan`` when not available).
    """

    k: np.ndarray
    i: np.ndarray
    j: np.ndarray
    eta: np.ndarray
    fpr: np.ndarray
    dist: np.ndarray
    xi: np.ndarray
    x_final: np.ndarray
    updates: int
    final_fpr: float
    wall_time: float = 0.0
    mode: str = "simulated"
    delays: np.ndarray | None = None
    violations: list = field(default_factory=list)
    min_slack: float = math.inf
    info: dict = field(default_factory=dict)

    def __len__(self):
        return int(self.k.size)

    def deciles(self) -> tuple[float, float]:
        """Mean FPR over the first and the last tenth of the recorded rows."""
        n = max(1, self.fpr.size // 10)
        return float(np.mean(self.fpr[:n])), float(np.mean(self.fpr[-n:]))


class _Recorder:
    def __init__(self, iterations, every, m=None):
        n = iterations // every
        self.every = every
        self.n = 0
        self.k = np.zeros(n, dtype=np.int64)
        self.i = np.zeros(n, dtype=np.int64)
        self.j = np.zeros(n, dtype=np.int64)
        self.eta = np.zeros(n)
        self.fpr = np.zeros(n)
        self.dist = np.full(n, np.nan)
        self.xi = np.full(n, np.nan)
        self.delays = np.zeros((n, m), dtype=np.int64) if m else None

    def due(self, k):
        return (k + 1) % self.every == 0

    def add(self, k, i, j, eta, fpr, dist=np.nan, xi=np.nan, d=None):
        r = self.n
        self.k[r], self.i[r], self.j[r], self.eta[r] = k, i, j, eta
        self.fpr[r], self.dist[r], self.xi[r] = fpr, dist, xi
        if d is not None and self.delays is not None:
            self.delays[r] = d
        self.n += 1

    def trace(self, x, updates, final_fpr, **kw):
        n = self.n
        return Trace(self.k[:n], self.i[:n], self.j[:n], self.eta[:n], self.fpr[:n],
                     self.dist[:n], self.xi[:n], np.array(x), updates, final_fpr,
                     delays=None if self.delays is None else self.delays[:n], **kw)


def _solution(config: RunConfig, needed: bool):
    xs = config.problem.known_solution
    if xs is None and needed:
        op = config.problem.op
        # tight enough that the descent checks see a true fixed point, relative so large data still converge
        xs = solve_reference(op, tol=1e-13 * max(1.0, op.fpr_norm(np.zeros(op.layout.N))))
    return xs


def _lyapunov_state(config, x_star, history):
    if not isinstance(config.policy, StepSizePolicy):
        raise InvalidParameters("Lyapunov instrumentation needs a step-size policy (coefficients)")
    return LyapunovState.from_policy(config.problem.op, x_star, config.policy, history,
                                     K=config.lyapunov_truncation)


def run_simulated(config: RunConfig) -> Trace:
    """Run ARock with injected delays; deterministic given ``config.seed``."""
    op = config.problem.op
    layout = op.layout
    m = layout.m
    lyap = config.check_descent or config.record_xi
    x_star = _solution(config, lyap)
    K = 0
    if lyap:
        K = config.lyapunov_truncation or (config.policy.truncation if config.policy.kind != "bounded_truncated"
                                           else config.policy.tau)
    window = config.window or max(config.delays.default_window(), K + 2)
    x0 = config.initial_point()
    hist = IterateHistory(layout, window, x0)
    state = _lyapunov_state(config, x_star, hist) if lyap else None

    block_rng, delay_rng = streams(config.seed)
    blocks = BlockSampler(m, block_rng)
    delays = DelaySampler(config.delays, delay_rng)
    rec = _Recorder(config.iterations, config.metrics_every)
    slices = [layout.block_slice(i) for i in range(m)]
    guard = DIVERGENCE_LIMIT / math.sqrt(layout.N)
    violations, min_slack = [], math.inf
    eta_cache = {}
    t0 = time.perf_counter()

    x = hist.latest()
    for k in range(config.iterations):
        i = blocks.next()
        d, j = delays.draw(k)
        eta = eta_cache.get(j)
        if eta is None:
            eta = eta_cache[j] = config.step(j)
        xhat = x if j == 0 else hist.gather(k, d, j)
        xi = np.nan
        if config.check_descent:
            rep = check_descent(state, k, d, eta, raise_on_violation=False)
            xi = rep.xi
            min_slack = min(min_slack, rep.slack)
            if not rep.ok:
                if config.descent_action == "raise":
                    raise DescentViolated(k, d, eta, rep.slack)
                violations.append(rep)
        if rec.due(k):
            if config.record_xi and np.isnan(xi):
                xi = lyapunov_value(state, k)
            dist = float(np.linalg.norm(x - x_star)) if x_star is not None else np.nan
            rec.add(k, i, j, eta, op.fpr_norm(x), dist, xi)
        sl = slices[i]
        new = x[sl] - eta * op.apply_S_block(xhat, i)
        x = hist.push_block(k + 1, sl, new)
        if not np.abs(new).max() <= guard:  # also true for nan
            norm = float(np.linalg.norm(x))
            if norm > DIVERGENCE_LIMIT or not math.isfinite(norm):
                tr = rec.trace(x, k + 1, op.fpr_norm(x) if math.isfinite(norm) else math.inf,
                               wall_time=time.perf_counter() - t0, violations=violations,
                               min_slack=min_slack)
                raise DivergenceDetected(k + 1, norm, tr)
    return rec.trace(x, config.iterations, op.fpr_norm(x), wall_time=time.perf_counter() - t0,
                     violations=violations, min_slack=min_slack,
                     info={"seed": config.seed, "window": window})


def run_sequential_km(problem: FixedPointProblem, eta: float, iterations: int, seed: int = 0,
                      x0=None) -> np.ndarray:
    """Plain random-block KM: ``x_i <- x_i - eta S_i(x)`` with the simulator's block stream.

    Used as the reference that a zero-delay simulated run must match bit for bit.
    """
    op = problem.op
    layout = op.layout
    x = np.zeros(layout.N) if x0 is None else as_block_vector(x0, layout)
    blocks = BlockSampler(layout.m, streams(seed)[0])
    for _ in range(iterations):
        i = blocks.next()
        sl = layout.block_slice(i)
        x[sl] = x[sl] - eta * op.apply_S_block(x, i)
    return x


def run_km_reference(config: RunConfig) -> Trace:
    """Synchronous full-vector KM iteration ``x^{k+1} = x^k - eta^k S x^k`` (no delays)."""
    op = config.problem.op
    x_star = config.problem.known_solution
    x = config.initial_point()
    rec = _Recorder(config.iterations, config.metrics_every)
    t0 = time.perf_counter()
    for k in range(config.iterations):
        eta = config.step(0)
        s = op.apply_S(x)
        if rec.due(k):
            dist = float(np.linalg.norm(x - x_star)) if x_star is not None else np.nan
            rec.add(k, -1, 0, eta, float(np.linalg.norm(s)), dist)
        x = x - eta * s
        norm = float(np.linalg.norm(x))
        if norm > DIVERGENCE_LIMIT or not math.isfinite(norm):
            raise DivergenceDetected(k + 1, norm, rec.trace(x, k + 1, math.inf, mode="km"))
    return rec.trace(x, config.iterations, op.fpr_norm(x), wall_time=time.perf_counter() - t0, mode="km")


def run(config: RunConfig) -> Trace:
    """Dispatch on ``config.mode``."""
    if config.mode == "concurrent":
        from .concurrent import run_concurrent
        return run_concurrent(config)
    return run_simulated(config)
