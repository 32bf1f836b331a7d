"""Delay models: stochastic (IID, evenly old) and deterministic schedules.

Stochastic models draw the current delay ``j(k)`` from a scalar law, then a
pattern ``t`` uniformly from ``{0..min(B, j)}^m`` conditioned on containing a
zero, and return ``j(k, i) = j(k) - t_i``.  Every component therefore lies in
``[j(k) - B, j(k)]`` and the oldest block has age exactly ``j(k)``.
"""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable

import numpy as np

from .errors import DeterministicModel, EmptySchedule, InvalidParameters

STOCHASTIC_KINDS = ("zero", "bounded", "uniform", "geometric")
KINDS = STOCHASTIC_KINDS + ("schedule",)


@dataclass(frozen=True)
class TailDistribution:
    """``P(l) = Prob[j(k) >= l]`` together with its support bound (``inf`` if unbounded)."""

    P: Callable[[np.ndarray], np.ndarray]
    support: float

    def __call__(self, l):
        return self.P(np.asarray(l))

    def values(self, K: int) -> np.ndarray:
        """``P_1 .. P_K`` as an array."""
        return np.asarray(self.P(np.arange(1, K + 1)), dtype=np.float64)


@dataclass(frozen=True)
class DelayModel:
    """Generator of delay vectors ``j(k)`` for ``m`` blocks.

    Use the ``zero``/``bounded``/``uniform``/``geometric``/``schedule``
    constructors rather than filling the fields by hand.
    """

    kind: str
    m: int
    tau: int = 0
    C: float = 1.0
    r: float = 0.5
    B: int = 0
    schedule: np.ndarray | None = field(default=None, repr=False)

    def __post_init__(self):
        if self.kind not in KINDS:
            raise InvalidParameters(f"unknown delay kind {self.kind!r}")
        if self.m < 1:
            raise InvalidParameters("m must be >= 1")
        if self.tau < 0 or self.B < 0:
            raise InvalidParameters("tau and B must be >= 0")
        if self.kind == "geometric" and not (0 < self.r < 1 and self.C > 0):
            raise InvalidParameters("geometric tail needs 0 < r < 1 and C > 0")
        if self.kind == "schedule":
            sched = np.asarray(self.schedule, dtype=np.int64)
            if sched.size == 0:
                raise EmptySchedule("deterministic schedule has no entries")
            if sched.ndim != 2 or sched.shape[1] != self.m:
                raise InvalidParameters(f"schedule must have shape (K, {self.m})")
            if sched.min() < 0:
                raise InvalidParameters("delays must be >= 0")
            sched.setflags(write=False)
            object.__setattr__(self, "schedule", sched)

    @classmethod
    def zero(cls, m):
        return cls("zero", m)

    @classmethod
    def bounded(cls, m, tau, B=None):
        return cls("bounded", m, tau=tau, B=tau if B is None else B)

    @classmethod
    def uniform(cls, m, tau, B=None):
        return cls("uniform", m, tau=tau, B=tau if B is None else B)

    @classmethod
    def geometric(cls, m, r, C=None, B=2):
        """Tail ``P_l = min(1, C r^l / (1 - r))``; ``C = 1 - r`` is the plain geometric law."""
        return cls("geometric", m, r=r, C=(1 - r) if C is None else C, B=B)

    @classmethod
    def from_schedule(cls, schedule):
        sched = np.atleast_2d(np.asarray(schedule, dtype=np.int64))
        if sched.size == 0:
            raise EmptySchedule("deterministic schedule has no entries")
        return cls("schedule", sched.shape[1], schedule=sched)

    @classmethod
    def from_schedule_file(cls, path):
        rows = []
        for line in Path(path).read_text().splitlines():
            line = line.split("#", 1)[0].strip()
            if line:
                rows.append([int(tok) for tok in line.split()])
        if not rows:
            raise EmptySchedule(f"{path} contains no schedule rows")
        return cls.from_schedule(rows)

    @property
    def stochastic(self) -> bool:
        return self.kind != "schedule"

    @property
    def bounded_support(self) -> bool:
        return self.kind != "geometric"

    def max_delay(self, tol: float = 1e-16) -> int:
        """Largest delay the model produces; for the geometric tail, the first
        ``l`` with ``P_l < tol``."""
        if self.kind == "zero":
            return 0
        if self.kind in ("bounded", "uniform"):
            return self.tau
        if self.kind == "schedule":
            return int(self.schedule.max())
        # C r^l / (1-r) < tol
        return max(0, math.ceil(math.log(tol * (1 - self.r) / self.C) / math.log(self.r)))

    def default_window(self) -> int:
        return 2 * self.max_delay() + 2


def tail_probability(model: DelayModel) -> TailDistribution:
    """Tail ``P_l = Prob[j(k) >= l]`` of the current delay."""
    kind = model.kind
    if kind == "schedule":
        raise DeterministicModel("a deterministic schedule has no delay law")
    if kind == "zero":
        return TailDistribution(lambda l: np.where(np.asarray(l) <= 0, 1.0, 0.0), 0)
    if kind == "bounded":
        tau = model.tau
        return TailDistribution(lambda l: np.where(np.asarray(l) <= tau, 1.0, 0.0), tau)
    if kind == "uniform":
        tau = model.tau

        def P(l):
            l = np.asarray(l, dtype=np.float64)
            return np.where(l <= tau, np.clip(1.0 - l / (tau + 1), 0.0, 1.0), 0.0)
        return TailDistribution(P, tau)
    C, r = model.C, model.r

    def P(l):
        l = np.asarray(l, dtype=np.float64)
        return np.where(l <= 0, 1.0, np.minimum(1.0, C * r ** np.maximum(l, 0) / (1 - r)))
    return TailDistribution(P, math.inf)


def _scalar_delays(model: DelayModel, rng: np.random.Generator, n: int) -> np.ndarray:
    if model.kind == "zero":
        return np.zeros(n, dtype=np.int64)
    if model.kind == "bounded":
        return np.full(n, model.tau, dtype=np.int64)
    if model.kind == "uniform":
        return rng.integers(0, model.tau + 1, size=n)
    # inverse CDF: j = max{l : P_l >= U}
    u = 1.0 - rng.random(n)  # (0, 1]
    j = np.floor(np.log(u * (1 - model.r) / model.C) / np.log(model.r))
    return np.maximum(j, 0).astype(np.int64)


def _patterns(rng: np.random.Generator, widths: np.ndarray, m: int) -> np.ndarray:
    """Rows uniform on ``{0..w}^m`` conditioned on ``min == 0`` (rejection)."""
    t = rng.integers(0, widths[:, None] + 1, size=(widths.shape[0], m))
    bad = np.flatnonzero(t.min(axis=1) > 0)
    while bad.size:
        t[bad] = rng.integers(0, widths[bad, None] + 1, size=(bad.size, m))
        bad = bad[t[bad].min(axis=1) > 0]
    return t


class DelaySampler:
    """Stateful source of delay vectors; draws stochastic delays in chunks.

    The stream depends only on the seed of ``rng`` (and the chunk size), so
    two samplers built from equal seeds yield identical delay sequences.
    """

    def __init__(self, model: DelayModel, rng: np.random.Generator | int | None = None,
                 chunk: int = 4096):
        self.model = model
        self.rng = rng if isinstance(rng, np.random.Generator) else np.random.default_rng(rng)
        self.chunk = int(chunk)
        self._buf = np.zeros((0, model.m), dtype=np.int64)
        self._pos = 0

    def _refill(self):
        model = self.model
        j = _scalar_delays(model, self.rng, self.chunk)
        widths = np.minimum(model.B, j)
        t = _patterns(self.rng, widths, model.m)
        self._buf = j[:, None] - t
        self._jmax = self._buf.max(axis=1).tolist()
        self._pos = 0

    def next(self, k: int) -> np.ndarray:
        if self.model.kind == "schedule":
            sched = self.model.schedule
            return sched[k % sched.shape[0]].copy()
        if self._pos >= self._buf.shape[0]:
            self._refill()
        d = self._buf[self._pos]
        self._pos += 1
        return d

    def draw(self, k: int) -> tuple[np.ndarray, int]:
        """Next delay vector together with its maximum (the current delay)."""
        if self.model.kind == "schedule":
            d = self.next(k)
            return d, int(d.max())
        if self._pos >= self._buf.shape[0]:
            self._refill()
        p = self._pos
        self._pos += 1
        return self._buf[p], self._jmax[p]

    def take(self, k0: int, n: int) -> np.ndarray:
        """The next ``n`` delay vectors as an ``(n, m)`` array."""
        return np.stack([self.next(k0 + i) for i in range(n)]) if n else np.zeros((0, self.model.m), np.int64)


def sample_delay_vector(model: DelayModel, k: int, rng: np.random.Generator) -> np.ndarray:
    """Single draw of ``j(k)``; for repeated draws prefer :class:`DelaySampler`."""
    if k < 0:
        raise ValueError("k must be >= 0")
    if model.kind == "schedule":
        return model.schedule[k % model.schedule.shape[0]].copy()
    j = _scalar_delays(model, rng, 1)
    t = _patterns(rng, np.minimum(model.B, j), model.m)
    return (j[:, None] - t)[0]


def delay_law(model: DelayModel, mass_tol: float = 1e-15, max_support: int = 200_000):
    """Enumerate ``(probability, delay vector)`` pairs of a stochastic model.

    The geometric tail is cut where the remaining mass drops below
    ``mass_tol``; the returned list also carries that missing mass.
    """
    tail = tail_probability(model)
    jmax = model.max_delay(mass_tol)
    P = tail(np.arange(0, jmax + 2))
    pj = P[:-1] - P[1:]
    support = []
    for j, p in enumerate(pj):
        if p <= 0:
            continue
        w = min(model.B, j)
        pats = [t for t in itertools.product(range(w + 1), repeat=model.m) if min(t) == 0]
        if len(support) + len(pats) > max_support:
            raise ValueError("delay law support too large to enumerate")
        q = p / len(pats)
        for t in pats:
            support.append((q, j - np.asarray(t, dtype=np.int64)))
    missing = float(P[-1])
    return support, missing


def worst_case_model(m: int, p: int, a: float, b: float) -> DelayModel:
    """Bounded model for ``p`` agents whose read-to-write time lies in ``[a, b]``.

    In the worst case ``p * (b/a + 1)`` updates land while one agent works.
    """
    if p < 1 or a <= 0 or b < a:
        raise InvalidParameters("need p >= 1 and 0 < a <= b")
    tau = math.ceil(p * (b / a + 1))
    return DelayModel.bounded(m, tau)
