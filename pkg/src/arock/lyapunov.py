"""Lyapunov function of an ARock run and exact descent checks.

For coefficients ``c_1 >= c_2 >= ... >= c_K >= 0`` the function is

    xi^k = ||x^k - x*||^2 + (1/m) sum_i c_i ||x^{k+1-i} - x^{k-i}||^2,

with ``x^n = x^0`` for ``n < 0``.  The expectation of ``xi^{k+1}`` over the
uniformly random block ``i(k)`` is computed exactly by evaluating all ``m``
candidate updates, so the descent inequalities are checked without sampling
noise.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .blockvec import IterateHistory
from .delays import DelayModel, delay_law, tail_probability
from .errors import DescentViolated, EnumerationTooLarge, InvalidParameters, LayoutMismatch
from .operators import OperatorSpec

MAX_ENUMERATION = 64
RELATIVE_TOL = 1e-12


def fpr_norm(op: OperatorSpec, x) -> float:
    """Fixed-point residual ``||x - Tx||``."""
    return op.fpr_norm(x)


@dataclass
class LyapunovState:
    """Everything the checker needs at step ``k``: operator, fixed point,
    coefficients, the parameters ``eps`` behind them, and the iterate history.

    ``eps`` is only used by the stochastic check (the realised partial sum
    ``sum_{i <= j(k)} eps_i D_i``) and by the per-delay bound ``h_j``.
    """

    op: OperatorSpec
    x_star: np.ndarray
    coefficients: np.ndarray
    history: IterateHistory
    eps: np.ndarray | None = None
    mode: str = "deterministic"

    def __post_init__(self):
        c = np.asarray(self.coefficients, dtype=np.float64).reshape(-1)
        if c.size and (np.any(c < 0) or np.any(np.diff(c) > 0)):
            raise InvalidParameters("coefficients must be nonnegative and nonincreasing")
        self.coefficients = c
        self.x_star = np.asarray(self.x_star, dtype=np.float64)
        if self.x_star.shape != (self.op.layout.N,):
            raise LayoutMismatch("x* does not match the operator layout")
        if self.mode not in ("stochastic", "deterministic"):
            raise InvalidParameters(f"unknown mode {self.mode!r}")
        if self.eps is not None:
            e = np.asarray(self.eps, dtype=np.float64).reshape(-1)
            with np.errstate(divide="ignore"):
                inv = np.where(np.isinf(e), 0.0, 1.0 / e)
            self.eps = e
            self._inv_cum = np.concatenate([[0.0], np.cumsum(inv)])
        self._starts = self.op.layout.offsets[:-1]
        self._D_k = None
        self._D = np.zeros(self.coefficients.size)

    def step_norms(self, k: int) -> np.ndarray:
        """``D_i = ||x^{k+1-i} - x^{k-i}||^2`` for ``i = 1..K``.

        Consecutive calls (``k`` then ``k + 1``) shift the cached vector and
        compute one new norm instead of ``K``.
        """
        K = self.coefficients.size
        if K == 0:
            return self._D
        if self._D_k is not None and k == self._D_k + 1 and k >= 1:
            D = self._D
            D[1:] = D[:-1].copy()
            diff = self.history.read(k) - self.history.read(k - 1)
            D[0] = float(diff @ diff)
        elif self._D_k != k:
            self._D = self.history.step_norms_sq(k, K)
        self._D_k = k
        return self._D

    @classmethod
    def from_policy(cls, op, x_star, policy, history, K=None):
        c = policy.coefficients(K)
        return cls(op, x_star, c, history, eps=policy.epsilon_values(c.size), mode=policy.mode)

    @property
    def m(self) -> int:
        return self.op.layout.m

    @property
    def K(self) -> int:
        return self.coefficients.size

    def h_bound(self, j: int) -> float:
        """``(1 + c_1/m + sum_{i <= j} 1/eps_i)^{-1}`` for the realised delay ``j``."""
        c1 = self.coefficients[0] if self.K else 0.0
        if self.eps is None:
            raise InvalidParameters("h_bound needs the epsilon values")
        inv = self._inv_cum[min(j, self.eps.size)]
        return 1.0 / (1.0 + c1 / self.m + inv)


def lyapunov_value(state: LyapunovState, k: int) -> float:
    """``xi^k`` from the history (iterates back to ``k - K`` or the ``x^0`` convention)."""
    x = state.history.read(k)
    dist = float(np.sum((x - state.x_star) ** 2))
    if state.K == 0:
        return dist
    D = state.step_norms(k)
    return dist + float(state.coefficients @ D) / state.m


def _candidates(state: LyapunovState, k: int, xhat: np.ndarray, eta: float):
    """Per-block pieces of the ``m`` possible updates at step ``k``.

    Returns ``(s, dist_i, step_i)``: the residual ``S xhat`` and, for each
    block ``i``, ``||x_new - x*||^2`` and ``||x_new - x^k||^2``.
    """
    x = state.history.read(k)
    s = state.op.apply_S(xhat)
    diff = x - state.x_star
    new = diff - eta * s
    starts = state._starts
    old_b = np.add.reduceat(diff * diff, starts)
    new_b = np.add.reduceat(new * new, starts)
    s_b = np.add.reduceat(s * s, starts)
    dist_i = float(diff @ diff) - old_b + new_b
    return s, dist_i, eta * eta * s_b


def _shared_tail(state: LyapunovState, D: np.ndarray) -> float:
    # terms of xi^{k+1} that do not depend on i(k): c_{i+1} ||x^{k+1-i} - x^{k-i}||^2
    if state.K <= 1:
        return 0.0
    return float(state.coefficients[1:] @ D[:-1]) / state.m


def exact_expected_next(state: LyapunovState, k: int, d, eta: float) -> float:
    """``E[xi^{k+1}]`` over the uniformly random block, given ``x^k`` and the delay vector ``d``."""
    m = state.m
    if m > MAX_ENUMERATION:
        raise EnumerationTooLarge(f"m = {m} exceeds the enumeration guard {MAX_ENUMERATION}")
    xhat = state.history.delayed_read(k, d)
    _, dist_i, step_i = _candidates(state, k, xhat, eta)
    D = state.step_norms(k)
    c1 = state.coefficients[0] if state.K else 0.0
    return float(np.mean(dist_i + c1 / m * step_i)) + _shared_tail(state, D)


@dataclass
class DescentReport:
    """Outcome of one descent check: ``slack = rhs - lhs``."""

    k: int
    lhs: float
    rhs: float
    xi: float
    slack: float
    eta: float
    h: float

    @property
    def ok(self) -> bool:
        return self.slack >= -RELATIVE_TOL * (1.0 + self.xi)


def check_descent(state: LyapunovState, k: int, d, eta: float, h: float | None = None,
                  raise_on_violation: bool = True) -> DescentReport:
    """Verify the one-step expected descent inequality at step ``k``.

    deterministic mode:
        E[xi^{k+1}] <= xi^k - (eta/m) ||S xhat||^2 max(0, 1 - eta/h_j)
    stochastic mode (conditioned on the realised delay vector):
        E[xi^{k+1}] <= ||x^k - x*||^2 + (1/m)(sum_{i<=j} eps_i D_i + sum_i c_{i+1} D_i)
                       - (eta/m) ||S xhat||^2 max(0, 1 - eta/h_j)

    ``h`` defaults to :meth:`LyapunovState.h_bound` at the current delay.
    The tolerance is ``1e-12 (1 + xi^k)``.
    """
    m = state.m
    if m > MAX_ENUMERATION:
        raise EnumerationTooLarge(f"m = {m} exceeds the enumeration guard {MAX_ENUMERATION}")
    d = np.asarray(d)
    j = int(d.max()) if d.size else 0
    if h is None:
        h = state.h_bound(j)
    xhat = state.history.delayed_read(k, d)
    s, dist_i, step_i = _candidates(state, k, xhat, eta)
    K = state.K
    D = state.step_norms(k)
    c1 = state.coefficients[0] if K else 0.0
    tail = _shared_tail(state, D)
    lhs = float(np.mean(dist_i + c1 / m * step_i)) + tail

    x = state.history.read(k)
    dist = float(np.sum((x - state.x_star) ** 2))
    xi = dist + (float(state.coefficients @ D) / m if K else 0.0)
    descent = eta / m * float(s @ s) * max(0.0, 1.0 - eta / h)
    if state.mode == "deterministic":
        rhs = xi - descent
    else:
        jj = min(j, K, state.eps.size)
        partial = float(state.eps[:jj] @ D[:jj]) / m if jj else 0.0
        rhs = dist + partial + tail - descent
    report = DescentReport(k, lhs, rhs, xi, rhs - lhs, eta, h)
    if raise_on_violation and not report.ok:
        raise DescentViolated(k, d, eta, report.slack)
    return report


def check_expected_descent(state: LyapunovState, k: int, model: DelayModel, eta: float,
                           h: float, mass_tol: float = 1e-15) -> DescentReport:
    """Descent averaged over the delay law as well as the block index.

    Enumerates every delay vector the model can produce (cut where the
    remaining probability mass is below ``mass_tol``) and checks

        E[xi^{k+1}] <= xi^k - (eta/m) E||S xhat||^2 max(0, 1 - eta/h).

    The cut mass is charged against the slack using the worst enumerated
    outcome, so a pass is never an artefact of the truncation.
    """
    if state.m > MAX_ENUMERATION:
        raise EnumerationTooLarge(f"m = {state.m} exceeds the enumeration guard")
    tail_probability(model)  # rejects deterministic schedules
    support, missing = delay_law(model, mass_tol)
    K = state.K
    D = state.step_norms(k)
    c1 = state.coefficients[0] if K else 0.0
    tail = _shared_tail(state, D)
    lhs = 0.0
    sq = 0.0
    worst = 0.0
    for p, d in support:
        xhat = state.history.delayed_read(k, d)
        s, dist_i, step_i = _candidates(state, k, xhat, eta)
        val = float(np.mean(dist_i + c1 / state.m * step_i)) + tail
        lhs += p * val
        sq += p * float(s @ s)
        worst = max(worst, val)
    lhs += missing * worst
    xi = lyapunov_value(state, k)
    rhs = xi - eta / state.m * sq * max(0.0, 1.0 - eta / h)
    return DescentReport(k, lhs, rhs, xi, rhs - lhs, eta, h)
