"""Block-structured vectors and the bounded iterate history.

A point of H = H_1 x ... x H_m is stored as one contiguous float64 array of
length ``N = sum(block_sizes)``; :class:`BlockLayout` knows where each block
lives.  :class:`IterateHistory` keeps the last ``W`` iterates in a ring buffer
so that delayed reads ``x^{k - j(k)}`` can be assembled block by block.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import LayoutMismatch, NonConsecutiveIndex, NonFinite, WindowExceeded


@dataclass(frozen=True)
class BlockLayout:
    """Decomposition of R^N into ``m`` consecutive blocks."""

    block_sizes: tuple[int, ...]
    offsets: np.ndarray = field(init=False, repr=False, compare=False)
    block_of: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        sizes = tuple(int(s) for s in self.block_sizes)
        if len(sizes) < 1:
            raise ValueError("a layout needs at least one block")
        if min(sizes) < 1:
            raise ValueError(f"block sizes must be >= 1, got {sizes}")
        object.__setattr__(self, "block_sizes", sizes)
        offsets = np.concatenate([[0], np.cumsum(sizes)]).astype(np.intp)
        offsets.setflags(write=False)
        object.__setattr__(self, "offsets", offsets)
        block_of = np.repeat(np.arange(len(sizes), dtype=np.intp), sizes)
        block_of.setflags(write=False)
        object.__setattr__(self, "block_of", block_of)

    @classmethod
    def uniform(cls, m: int, size: int = 1) -> "BlockLayout":
        return cls((size,) * m)

    @classmethod
    def for_dimension(cls, n: int, block_size: int = 1) -> "BlockLayout":
        """Split ``n`` coordinates into blocks of ``block_size`` (last one shorter)."""
        if n % block_size == 0:
            return cls.uniform(n // block_size, block_size)
        full, rest = divmod(n, block_size)
        return cls((block_size,) * full + (rest,))

    @property
    def m(self) -> int:
        return len(self.block_sizes)

    @property
    def N(self) -> int:
        return int(self.offsets[-1])

    @property
    def is_scalar(self) -> bool:
        """True when every block holds a single coordinate."""
        return self.m == self.N

    def block_slice(self, i: int) -> slice:
        return slice(int(self.offsets[i]), int(self.offsets[i + 1]))

    def split(self, x: np.ndarray) -> list[np.ndarray]:
        return [x[self.block_slice(i)] for i in range(self.m)]


def as_block_vector(data, layout: BlockLayout) -> np.ndarray:
    """Validate ``data`` against ``layout`` and return it as a float64 array."""
    x = np.array(data, dtype=np.float64).reshape(-1)
    if x.shape[0] != layout.N:
        raise LayoutMismatch(f"vector has length {x.shape[0]}, layout expects {layout.N}")
    if not np.all(np.isfinite(x)):
        raise NonFinite("block vector contains NaN or Inf")
    return x


def distance(x: np.ndarray, y: np.ndarray) -> float:
    """Euclidean distance ``||x - y||``."""
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if x.shape != y.shape:
        raise LayoutMismatch(f"shapes {x.shape} and {y.shape} differ")
    return float(np.linalg.norm(x - y))


def current_delay(d) -> int:
    """The current delay j(k): the largest component of a delay vector."""
    d = np.asarray(d)
    return int(d.max()) if d.size else 0


class IterateHistory:
    """Ring buffer of the ``window`` most recent iterates.

    Iterates are pushed with consecutive indices ``k = 0, 1, 2, ...``.  Reads
    at negative indices return ``x0``; reads older than the window raise
    :class:`WindowExceeded`.
    """

    def __init__(self, layout: BlockLayout, window: int, x0=None):
        if window < 1:
            raise ValueError("window must be positive")
        self.layout = layout
        self.window = int(window)
        self._buf = np.zeros((self.window, layout.N))
        self._cols = np.arange(layout.N)
        self.top = -1
        self.x0 = None
        if x0 is not None:
            self.push(x0, 0)

    def __len__(self):
        return min(self.top + 1, self.window)

    @property
    def oldest(self) -> int:
        return max(0, self.top - self.window + 1)

    def push(self, x, k: int) -> None:
        if k != self.top + 1:
            raise NonConsecutiveIndex(f"expected index {self.top + 1}, got {k}")
        x = np.asarray(x, dtype=np.float64)
        if x.shape != (self.layout.N,):
            raise LayoutMismatch(f"iterate has shape {x.shape}, expected ({self.layout.N},)")
        if k == 0:
            self.x0 = x.copy()
        self._buf[k % self.window] = x
        self.top = k

    def push_block(self, k: int, rows: slice, values: np.ndarray) -> np.ndarray:
        """Push ``x^k`` equal to ``x^{k-1}`` except on ``rows``; returns a view of it."""
        if k != self.top + 1 or k == 0:
            raise NonConsecutiveIndex(f"expected index {self.top + 1} (> 0), got {k}")
        dst = self._buf[k % self.window]
        dst[:] = self._buf[(k - 1) % self.window]
        dst[rows] = values
        self.top = k
        return dst

    def latest(self) -> np.ndarray:
        """View of the newest iterate (do not mutate)."""
        return self._buf[self.top % self.window]

    def read(self, n: int) -> np.ndarray:
        """Copy of the full iterate ``x^n``."""
        if n < 0:
            return self.x0.copy()
        if n > self.top or n < self.oldest:
            raise WindowExceeded(f"iterate {n} not in window [{self.oldest}, {self.top}]")
        return self._buf[n % self.window].copy()

    def delayed_read(self, k: int, d) -> np.ndarray:
        """Assemble ``x^{k - d}``: block ``i`` taken from iterate ``k - d[i]``."""
        if k != self.top:
            raise ValueError(f"delayed reads are taken at the top index {self.top}, got {k}")
        d = np.asarray(d, dtype=np.intp)
        if d.shape != (self.layout.m,):
            raise LayoutMismatch(f"delay vector has shape {d.shape}, expected ({self.layout.m},)")
        n = k - d
        if n.min() < 0:
            stale = n < 0
            ok = ~stale
            if np.any(n[ok] < self.oldest):
                raise WindowExceeded(f"delay {int(d.max())} reaches before window start {self.oldest}")
            rows = np.where(stale, 0, n) % self.window
            out = self._buf[rows[self.layout.block_of], self._cols]
            mask = stale[self.layout.block_of]
            out[mask] = self.x0[mask]
            return out
        if n.min() < self.oldest:
            raise WindowExceeded(f"delay {int(d.max())} reaches before window start {self.oldest}")
        rows = n % self.window
        return self._buf[rows[self.layout.block_of], self._cols]

    def gather(self, k: int, d: np.ndarray, j: int) -> np.ndarray:
        """Unchecked :meth:`delayed_read` for the simulator's hot loop.

        ``j`` must be ``max(d)``; falls back to the checked path whenever the
        read touches ``x^0`` padding or the window edge.
        """
        if j > k or j >= self.window or k != self.top:
            return self.delayed_read(k, d)
        rows = (k - d) % self.window
        if self.layout.is_scalar:
            return self._buf[rows, self._cols]
        return self._buf[rows[self.layout.block_of], self._cols]

    def step_norms_sq(self, k: int, count: int) -> np.ndarray:
        """``||x^{k+1-i} - x^{k-i}||^2`` for ``i = 1..count`` (zero once ``k - i < 0``)."""
        out = np.zeros(count)
        upper = min(count, k)  # terms with k - i >= 0
        if upper <= 0:
            return out
        if k - upper < self.oldest:
            raise WindowExceeded(f"need iterates back to {k - upper}, window starts at {self.oldest}")
        idx = np.arange(k, k - upper - 1, -1) % self.window
        stacked = self._buf[idx]
        out[:upper] = np.sum(np.diff(stacked[::-1], axis=0)[::-1] ** 2, axis=1)
        return out
