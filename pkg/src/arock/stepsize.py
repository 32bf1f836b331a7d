"""Step sizes for ARock under stochastic and deterministic delays.

All infinite series are truncated at ``K`` terms.  A truncated series is
accepted only when the neglected remainder is controlled: either the terms
vanish beyond ``K`` (bounded support), an analytic tail is known (power-law
parameter sequences, via the Hurwitz zeta function), or the last ``K/2``
partial-sum increments add up to less than ``REMAINDER_TOL``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy.special import zeta

from .delays import TailDistribution
from .errors import (
    InvalidParameters,
    InvalidTruncation,
    NonSummableTail,
    SummabilityViolated,
)

DEFAULT_TRUNCATION = 1000
REMAINDER_TOL = 1e-10


def _checked_sum(terms: np.ndarray, exact: bool, error, what: str) -> float:
    total = float(np.sum(terms))
    if not math.isfinite(total):
        raise error(f"{what}: partial sum is not finite")
    if not exact and terms.size >= 2:
        remainder = float(np.sum(terms[terms.size // 2:]))
        if remainder >= REMAINDER_TOL:
            raise error(f"{what}: last {terms.size - terms.size // 2} terms add up to "
                        f"{remainder:.3g} >= {REMAINDER_TOL:g}; series not resolved at K={terms.size}")
    return total


def _tail_values(tail: TailDistribution, K: int) -> tuple[np.ndarray, np.ndarray, bool]:
    l = np.arange(1, K + 1, dtype=np.float64)
    return l, tail.values(K), tail.support <= K


def _inverse_sum(eps, tail: TailDistribution, K: int) -> float:
    inv = eps.inverse(K)
    exact = eps.finite
    if not exact and tail.support <= K:
        # canonical choices put eps_l = inf past the support, so 1/eps_l = 0 there
        exact = not np.any(inv[int(tail.support):])
    return _checked_sum(inv, exact, SummabilityViolated, "sum 1/eps_l")


# -- parameter sequences --------------------------------------------------

@dataclass(frozen=True)
class EpsilonSequence:
    """Positive parameters ``eps_1, eps_2, ...`` weighting the Lyapunov terms.

    ``tail_sum(K)`` returns ``sum_{l > K} eps_l`` when it is known in closed
    form.  Entries may be ``inf`` where the delay tail vanishes; such
    entries contribute nothing to ``sum eps_l P_l`` or ``sum 1/eps_l``.
    """

    fn: Callable[[np.ndarray], np.ndarray]
    kind: str
    truncation: int = DEFAULT_TRUNCATION
    tail_sum: Callable[[int], float] | None = field(default=None, compare=False)

    finite = False  # True when only finitely many parameters are present

    def values(self, K: int | None = None) -> np.ndarray:
        K = self.truncation if K is None else K
        return np.asarray(self.fn(np.arange(1, K + 1, dtype=np.float64)), dtype=np.float64)

    def inverse(self, K: int | None = None) -> np.ndarray:
        e = self.values(K)
        with np.errstate(divide="ignore"):
            return np.where(np.isinf(e), 0.0, 1.0 / e)

    def weighted(self, P: np.ndarray) -> np.ndarray:
        """``eps_l * P_l`` with the convention ``inf * 0 = 0``."""
        e = self.values(P.shape[0])
        with np.errstate(invalid="ignore"):
            return np.where(P > 0, e * P, 0.0)


def _sqrt_inv(P):
    with np.errstate(divide="ignore"):
        return np.where(P > 0, 1.0 / np.sqrt(np.where(P > 0, P, 1.0)), np.inf)


def weakest_condition(tail: TailDistribution, m: int, K: int = DEFAULT_TRUNCATION) -> EpsilonSequence:
    """``eps_l = sqrt(m) P_l^{-1/2} l^{-1/2}``: needs only ``sum (l P_l)^{1/2} < inf``."""
    sm = math.sqrt(m)
    return EpsilonSequence(lambda l: sm * _sqrt_inv(tail(l)) / np.sqrt(l), "weakest", K)


def largest_step(tail: TailDistribution, m: int, K: int = DEFAULT_TRUNCATION) -> EpsilonSequence:
    """``eps_l = sqrt(m) P_l^{-1/2}``: the largest stochastic step size."""
    sm = math.sqrt(m)
    return EpsilonSequence(lambda l: sm * _sqrt_inv(tail(l)), "largest", K)


def power_law(gamma: float, m: int, K: int = DEFAULT_TRUNCATION) -> EpsilonSequence:
    """``eps_l = sqrt(m) l^{-(1+gamma)}``, summable with a closed-form tail."""
    if gamma <= 0:
        raise InvalidParameters("gamma must be positive")
    sm = math.sqrt(m)
    s = 1.0 + gamma
    return EpsilonSequence(lambda l: sm * l ** (-s), f"powerlaw({gamma:g})", K,
                           tail_sum=lambda K_: sm * float(zeta(s, K_ + 1)))


def custom(values, K: int | None = None) -> EpsilonSequence:
    """Finitely many parameters ``eps_1..eps_n``; entries past ``n`` are treated as absent."""
    vals = np.asarray(values, dtype=np.float64).reshape(-1)
    if vals.size and np.any(vals <= 0):
        raise InvalidParameters("epsilon values must be positive")
    n = vals.size

    def fn(l):
        idx = l.astype(np.int64) - 1
        out = np.full(l.shape, np.nan)
        inside = idx < n
        out[inside] = vals[idx[inside]]
        return out
    seq = EpsilonSequence(fn, "custom", n if K is None else K)
    return _FiniteEpsilon(seq, n)


class _FiniteEpsilon(EpsilonSequence):
    finite = True

    def __init__(self, seq: EpsilonSequence, n: int):
        super().__init__(seq.fn, seq.kind, seq.truncation, lambda K_: 0.0)
        object.__setattr__(self, "n", n)

    def values(self, K=None):
        K = self.truncation if K is None else K
        v = super().values(min(K, self.n))
        # past the end: weight 0 in sums of eps, no 1/eps contribution
        return np.concatenate([v, np.zeros(max(0, K - self.n))])

    def inverse(self, K=None):
        e = self.values(K)
        return np.where(e > 0, 1.0 / np.where(e > 0, e, 1.0), 0.0)

    def weighted(self, P):
        return self.values(P.shape[0]) * P


# -- stochastic delays ----------------------------------------------------

def stochastic_h_weak(tail: TailDistribution, m: int, K: int = DEFAULT_TRUNCATION) -> float:
    """``(1 + m^{-1/2} sum_l P_l^{1/2} (l^{1/2} + l^{-1/2}))^{-1}``."""
    l, P, exact = _tail_values(tail, K)
    sp = np.sqrt(P)
    _checked_sum(np.sqrt(l * P), exact, NonSummableTail, "sum (l P_l)^1/2")
    s = _checked_sum(sp * (np.sqrt(l) + 1 / np.sqrt(l)), exact, NonSummableTail, "h (weak)")
    return 1.0 / (1.0 + s / math.sqrt(m))


def stochastic_h_large(tail: TailDistribution, m: int, K: int = DEFAULT_TRUNCATION) -> float:
    """``(1 + 2 m^{-1/2} sum_l P_l^{1/2})^{-1}``."""
    l, P, exact = _tail_values(tail, K)
    sp = np.sqrt(P)
    _checked_sum(sp * l, exact, NonSummableTail, "sum P_l^1/2 l")
    s = _checked_sum(sp, exact, NonSummableTail, "h (large)")
    return 1.0 / (1.0 + 2.0 * s / math.sqrt(m))


def generic_stochastic_h(eps: EpsilonSequence, tail: TailDistribution, m: int,
                         K: int = DEFAULT_TRUNCATION) -> float:
    """``(1 + (1/m) sum eps_l P_l + sum 1/eps_l)^{-1}`` for any admissible ``eps``."""
    l, P, exact = _tail_values(tail, K)
    eP = eps.weighted(P)
    _checked_sum(eP * l, exact, SummabilityViolated, "sum eps_l P_l l")
    a = _checked_sum(eP, exact, SummabilityViolated, "sum eps_l P_l")
    b = _inverse_sum(eps, tail, K)
    return 1.0 / (1.0 + a / m + b)


# -- deterministic delays -------------------------------------------------

def deterministic_eta(j: int, c: float, gamma: float, m: int) -> float:
    """Delay-adaptive step ``c (1 + m^{-1/2}(1 + 1/g + (j+1)^{2+g}/(2+g)))^{-1}``."""
    if not 0 < c < 1 or gamma <= 0 or j < 0 or m < 1:
        raise InvalidParameters(f"need 0<c<1, gamma>0, j>=0, m>=1 (got c={c}, gamma={gamma}, j={j}, m={m})")
    g = gamma
    return c / (1.0 + (1.0 + 1.0 / g + (j + 1.0) ** (2.0 + g) / (2.0 + g)) / math.sqrt(m))


def _eps_total(eps: EpsilonSequence, K: int) -> float:
    e = eps.values(K)
    if eps.tail_sum is not None:
        total = float(np.sum(e))
        if not math.isfinite(total):
            raise SummabilityViolated("sum eps_l is not finite")
        return total + eps.tail_sum(K)
    return _checked_sum(e, False, SummabilityViolated, "sum eps_l")


def generic_deterministic_h(eps: EpsilonSequence, j: int, m: int, K: int = DEFAULT_TRUNCATION) -> float:
    """``h_j = (1 + (1/m) sum eps_l + sum_{i<=j} 1/eps_i)^{-1}``."""
    if j < 0:
        raise InvalidParameters("j must be >= 0")
    total = _eps_total(eps, K)
    partial = float(np.sum(eps.inverse(max(j, 0))[:j])) if j else 0.0
    return 1.0 / (1.0 + total / m + partial)


def bounded_truncated_eta(eps_values, c: float, m: int, mode: str, j: int = 0,
                          tail: TailDistribution | None = None) -> float:
    """Step size for delays bounded by ``tau = len(eps_values)``.

    stochastic:    ``c (1 + sum_{l<=tau} (eps_l P_l / m + 1/eps_l))^{-1}``
    deterministic: ``c (1 + sum_{i<=j}  (eps_i / m  + 1/eps_i))^{-1}``
    """
    e = np.asarray(eps_values, dtype=np.float64).reshape(-1)
    tau = e.size
    if np.any(e <= 0) or not np.all(np.isfinite(e)):
        raise InvalidTruncation("truncated epsilon values must be positive and finite")
    if not 0 < c < 1:
        raise InvalidParameters("c must lie in (0, 1)")
    if mode == "stochastic":
        if tail is None:
            raise InvalidTruncation("stochastic mode needs the tail distribution")
        P = tail.values(tau) if tau else np.zeros(0)
        s = float(np.sum(e * P / m + 1.0 / e))
    elif mode == "deterministic":
        if j < 0 or j > tau:
            raise InvalidTruncation(f"current delay {j} outside the truncation [0, {tau}]")
        s = float(np.sum(e[:j] / m + 1.0 / e[:j]))
    else:
        raise InvalidParameters(f"mode must be 'stochastic' or 'deterministic', got {mode!r}")
    return c / (1.0 + s)


def lyapunov_coefficients(eps: EpsilonSequence, tail: TailDistribution | None, mode: str,
                          K: int = DEFAULT_TRUNCATION) -> np.ndarray:
    """``c_1..c_K`` with ``c_i = sum_{l=i}^K eps_l P_l`` (stochastic) or ``eps_l`` (deterministic).

    Built by a reverse running sum, so ``c_{i+1} + eps_i (P_i) = c_i`` holds
    term by term.
    """
    if mode == "stochastic":
        if tail is None:
            raise InvalidParameters("stochastic coefficients need the tail distribution")
        l, P, exact = _tail_values(tail, K)
        terms = eps.weighted(P)
        _checked_sum(terms * l, exact or eps.finite, SummabilityViolated, "sum c_i")
        _inverse_sum(eps, tail, K)
    elif mode == "deterministic":
        terms = eps.values(K)
        _eps_total(eps, K)
    else:
        raise InvalidParameters(f"mode must be 'stochastic' or 'deterministic', got {mode!r}")
    return np.cumsum(terms[::-1])[::-1].copy()


# -- policies -------------------------------------------------------------

POLICY_KINDS = ("stochastic_weak", "stochastic_large", "generic_stochastic",
                "deterministic_adaptive", "generic_deterministic", "bounded_truncated")


@dataclass(eq=False)
class StepSizePolicy:
    """Maps the current delay ``j`` to a step size ``eta`` in ``(0, c]``.

    Besides :meth:`eta`, a policy exposes the pieces the Lyapunov checker
    needs: the parameter sequence, the coefficients ``c_i``, and
    :meth:`descent_h`, the bound ``h_j`` with ``eta <= c h_j``.
    """

    kind: str
    c: float
    m: int
    tail: TailDistribution | None = None
    epsilon: EpsilonSequence | None = None
    gamma: float = 1.0
    truncation: int = DEFAULT_TRUNCATION
    tau: int | None = None
    mode: str = field(init=False)
    _cache: dict = field(init=False, default_factory=dict, repr=False)

    def __post_init__(self):
        if self.kind not in POLICY_KINDS:
            raise InvalidParameters(f"unknown step-size kind {self.kind!r}")
        if not 0 < self.c < 1:
            raise InvalidParameters(f"c must lie strictly in (0, 1), got {self.c}")
        K = self.truncation
        if self.kind in ("stochastic_weak", "stochastic_large", "generic_stochastic"):
            self.mode = "stochastic"
            if self.tail is None:
                raise InvalidParameters(f"{self.kind} needs a delay tail distribution")
            if self.epsilon is None:
                make = weakest_condition if self.kind == "stochastic_weak" else largest_step
                self.epsilon = make(self.tail, self.m, K)
        elif self.kind == "bounded_truncated":
            self.mode = "stochastic" if self.tail is not None else "deterministic"
            if self.tau is None:
                if self.tail is None or not math.isfinite(self.tail.support):
                    raise InvalidTruncation("bounded_truncated needs a finite tau")
                self.tau = int(self.tail.support)
            if self.epsilon is None:
                self.epsilon = custom(np.full(self.tau, math.sqrt(self.m)))
        else:
            self.mode = "deterministic"
            if self.epsilon is None:
                self.epsilon = power_law(self.gamma, self.m, K)
        # fail early on inadmissible configurations
        self.eta(0)
        self.descent_h(0)

    def _bounded_eps(self):
        return self.epsilon.values(self.tau)

    def eta(self, j: int = 0) -> float:
        j = int(j)
        if self.mode == "stochastic" and self.kind != "bounded_truncated":
            j = 0  # constant in the delay
        val = self._cache.get(j)
        if val is not None:
            return val
        K = self.truncation
        if self.kind == "stochastic_weak":
            val = self.c * stochastic_h_weak(self.tail, self.m, K)
        elif self.kind == "stochastic_large":
            val = self.c * stochastic_h_large(self.tail, self.m, K)
        elif self.kind == "generic_stochastic":
            val = self.c * generic_stochastic_h(self.epsilon, self.tail, self.m, K)
        elif self.kind == "deterministic_adaptive":
            val = deterministic_eta(j, self.c, self.gamma, self.m)
        elif self.kind == "generic_deterministic":
            val = self.c * generic_deterministic_h(self.epsilon, j, self.m, K)
        elif self.mode == "stochastic":
            val = bounded_truncated_eta(self._bounded_eps(), self.c, self.m, "stochastic", tail=self.tail)
        else:
            val = bounded_truncated_eta(self._bounded_eps(), self.c, self.m, "deterministic", j=min(j, self.tau))
        self._cache[j] = val
        return val

    def coefficients(self, K: int | None = None) -> np.ndarray:
        """Lyapunov coefficients matching this policy's parameter sequence."""
        if self.kind == "bounded_truncated":
            e = custom(self._bounded_eps())
            c = lyapunov_coefficients(e, self.tail, self.mode, self.tau)
            K = self.tau if K is None else K
            return np.concatenate([c, np.zeros(max(0, K - c.size))])[:K]
        return lyapunov_coefficients(self.epsilon, self.tail, self.mode,
                                     self.truncation if K is None else K)

    def epsilon_values(self, K: int | None = None) -> np.ndarray:
        K = self.truncation if K is None else K
        if self.kind == "bounded_truncated":
            e = self._bounded_eps()
            return np.concatenate([e, np.full(max(0, K - e.size), np.inf)])[:K]
        return self.epsilon.values(K)

    def descent_h(self, j: int = 0) -> float:
        """Bound ``h`` (or ``h_j``) of the descent lemma matching this policy."""
        key = ("h", int(j) if self.mode == "deterministic" else 0)
        val = self._cache.get(key)
        if val is not None:
            return val
        K = self.truncation
        if self.kind == "bounded_truncated":
            e = self._bounded_eps()
            c1 = float(self.coefficients(self.tau)[0]) if self.tau else 0.0
            if self.mode == "stochastic":
                inv = float(np.sum(1.0 / e))
            else:
                inv = float(np.sum(1.0 / e[:min(int(j), self.tau)]))
            val = 1.0 / (1.0 + c1 / self.m + inv)
        elif self.mode == "stochastic":
            val = generic_stochastic_h(self.epsilon, self.tail, self.m, K)
        else:
            val = generic_deterministic_h(self.epsilon, int(j), self.m, K)
        self._cache[key] = val
        return val


def make_policy(kind: str, c: float, m: int, tail=None, gamma: float = 1.0, epsilon=None,
                truncation: int = DEFAULT_TRUNCATION, tau: int | None = None) -> StepSizePolicy:
    """Build a policy; ``epsilon`` may be an :class:`EpsilonSequence`, a canonical
    name (``weakest``, ``largest``, ``powerlaw``) or a sequence of values."""
    if isinstance(epsilon, str):
        name = epsilon.lower()
        if name == "weakest":
            epsilon = weakest_condition(tail, m, truncation)
        elif name == "largest":
            epsilon = largest_step(tail, m, truncation)
        elif name == "powerlaw":
            epsilon = power_law(gamma, m, truncation)
        else:
            raise InvalidParameters(f"unknown epsilon choice {epsilon!r}")
    elif epsilon is not None and not isinstance(epsilon, EpsilonSequence):
        epsilon = custom(epsilon)
    return StepSizePolicy(kind, c, m, tail=tail, epsilon=epsilon, gamma=gamma,
                          truncation=truncation, tau=tau)
