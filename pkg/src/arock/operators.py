"""Nonexpansive operators T and their residuals S = I - T.

Five kinds are supported, all built from a matrix ``A`` and vector ``b``:

=====================  ==============================================
kind                   T x
=====================  ==============================================
``grad_quadratic``     x - (2/L)(Ax - b)
``forward_backward``   soft_threshold(x - (2/L)(Ax - b), 2 lam / L)
``projected_box``      proj_[lo, hi](x - (2/L)(Ax - b))
``linear_psd``         x - (2/M)(Ax - b)
``linear_jacobi``      x - ((I + D^-1 R) x - D^-1 b),  D = diag(A), R = A - D
=====================  ==============================================

The first three minimise f(x) = x'Ax/2 - b'x (plus an l1 term or a box
constraint); the last two solve ``Ax = b``.  Every kind evaluates a single
block of ``S`` with only the corresponding rows of ``A``.
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np

from .blockvec import BlockLayout, as_block_vector
from .errors import (
    BlockOutOfRange,
    InvalidBox,
    InvalidOperator,
    LayoutMismatch,
    MaxIterationsExceeded,
    NegativeThreshold,
    NonexpansivenessViolated,
    NonFinite,
)

KINDS = ("grad_quadratic", "forward_backward", "projected_box", "linear_psd", "linear_jacobi")


def soft_threshold(v, t: float) -> np.ndarray:
    """Componentwise ``sign(v) * max(|v| - t, 0)``, the prox of ``t * ||.||_1``."""
    if t < 0:
        raise NegativeThreshold(f"threshold must be >= 0, got {t}")
    v = np.asarray(v, dtype=np.float64)
    if t == 0:
        return v.copy()
    return np.sign(v) * np.maximum(np.abs(v) - t, 0.0)


def proj_box(v, lower, upper) -> np.ndarray:
    """Clamp ``v`` into ``[lower, upper]`` componentwise."""
    lower = np.asarray(lower, dtype=np.float64)
    upper = np.asarray(upper, dtype=np.float64)
    if np.any(lower > upper):
        raise InvalidBox("box needs lower <= upper componentwise")
    return np.minimum(np.maximum(np.asarray(v, dtype=np.float64), lower), upper)


def power_iteration(A: np.ndarray, tol: float = 1e-8, max_iter: int = 100_000, seed: int = 0) -> float:
    """Largest-magnitude eigenvalue estimate of a symmetric matrix."""
    n = A.shape[0]
    rng = np.random.default_rng(seed)
    v = rng.standard_normal(n)
    v /= np.linalg.norm(v)
    lam = 0.0
    for _ in range(max_iter):
        w = A @ v
        nw = np.linalg.norm(w)
        if nw == 0.0:
            return 0.0
        lam_new = float(v @ w)
        v = w / nw
        if abs(lam_new - lam) <= tol * max(1.0, abs(lam_new)):
            return abs(lam_new)
        lam = lam_new
    return abs(lam)


def spectral_radius(B: np.ndarray, tol: float = 1e-8) -> float:
    if np.allclose(B, B.T, rtol=0, atol=1e-14 * max(1.0, np.abs(B).max())):
        return power_iteration(B, tol=tol)
    # nonsymmetric iteration matrices may have complex dominant pairs
    return float(np.max(np.abs(np.linalg.eigvals(B))))


@dataclass(frozen=True, eq=False)
class OperatorSpec:
    """An immutable nonexpansive operator; see the module docstring for kinds.

    ``L`` holds the Lipschitz constant (or the spectral bound ``M`` for
    ``linear_psd``); it is unused by ``linear_jacobi``.
    """

    kind: str
    A: np.ndarray
    b: np.ndarray
    layout: BlockLayout
    L: float = 1.0
    lam: float = 0.0
    lower: np.ndarray | None = None
    upper: np.ndarray | None = None
    validate: bool = True
    _diag: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        if self.kind not in KINDS:
            raise InvalidOperator(f"unknown operator kind {self.kind!r}; choose from {KINDS}")
        A = np.array(self.A, dtype=np.float64)
        b = np.array(self.b, dtype=np.float64).reshape(-1)
        n = self.layout.N
        if A.shape != (n, n) or b.shape != (n,):
            raise LayoutMismatch(f"A {A.shape} / b {b.shape} do not match layout dimension {n}")
        if not (np.all(np.isfinite(A)) and np.all(np.isfinite(b))):
            raise NonFinite("operator data contains NaN or Inf")
        A.setflags(write=False)
        b.setflags(write=False)
        object.__setattr__(self, "A", A)
        object.__setattr__(self, "b", b)
        object.__setattr__(self, "L", float(self.L))
        object.__setattr__(self, "lam", float(self.lam))
        object.__setattr__(self, "_diag", np.diag(A).copy())
        if self.kind == "projected_box":
            if self.lower is None or self.upper is None:
                raise InvalidBox("projected_box needs lower and upper bounds")
            lo = np.broadcast_to(np.asarray(self.lower, dtype=np.float64), (n,)).copy()
            hi = np.broadcast_to(np.asarray(self.upper, dtype=np.float64), (n,)).copy()
            if np.any(lo > hi):
                raise InvalidBox("box needs lower <= upper componentwise")
            object.__setattr__(self, "lower", lo)
            object.__setattr__(self, "upper", hi)
        if self.kind == "forward_backward" and self.lam < 0:
            raise InvalidOperator("l1 weight must be >= 0")
        if self.validate:
            self._check_invariants()

    def _check_invariants(self):
        A = self.A
        if self.kind == "linear_jacobi":
            d = self._diag
            if np.any(d == 0):
                raise InvalidOperator("Jacobi splitting needs a nonzero diagonal")
            B = -(A - np.diag(d)) / d[:, None]
            rho = spectral_radius(B)
            if rho > 1 + 1e-8:
                raise InvalidOperator(f"rho(-D^-1 R) = {rho:.6g} > 1")
            if np.linalg.norm(B, 2) > 1 + 1e-12:
                warnings.warn("||D^-1 R||_2 > 1: T is not nonexpansive in the Euclidean norm",
                              stacklevel=3)
            return
        scale = max(1.0, float(np.abs(A).max()))
        if not np.allclose(A, A.T, rtol=0, atol=1e-12 * scale):
            raise InvalidOperator("A must be symmetric")
        if np.linalg.eigvalsh(A).min() < -1e-10 * scale:
            raise InvalidOperator("A must be positive semidefinite")
        if self.L <= 0:
            raise InvalidOperator("L (or M) must be positive")
        lam_max = power_iteration(A, tol=1e-8)
        if self.L < lam_max * (1 - 1e-8):
            raise InvalidOperator(f"L = {self.L:.6g} is below lambda_max(A) = {lam_max:.6g}")

    # -- constructors -----------------------------------------------------

    @classmethod
    def grad_quadratic(cls, A, b, L, layout=None, **kw):
        return cls("grad_quadratic", A, b, _layout(layout, b), L=L, **kw)

    @classmethod
    def forward_backward(cls, A, b, L, lam, layout=None, **kw):
        return cls("forward_backward", A, b, _layout(layout, b), L=L, lam=lam, **kw)

    @classmethod
    def projected_box(cls, A, b, L, lower, upper, layout=None, **kw):
        return cls("projected_box", A, b, _layout(layout, b), L=L, lower=lower, upper=upper, **kw)

    @classmethod
    def linear_psd(cls, A, b, M, layout=None, **kw):
        return cls("linear_psd", A, b, _layout(layout, b), L=M, **kw)

    @classmethod
    def linear_jacobi(cls, A, b, layout=None, **kw):
        return cls("linear_jacobi", A, b, _layout(layout, b), **kw)

    # -- evaluation -------------------------------------------------------

    @property
    def m(self) -> int:
        return self.layout.m

    def _T_rows(self, x: np.ndarray, rows: slice) -> np.ndarray:
        xr = x[rows]
        r = self.A[rows] @ x - self.b[rows]
        if self.kind == "linear_jacobi":
            return xr - r / self._diag[rows]
        step = 2.0 / self.L
        y = xr - step * r
        if self.kind == "forward_backward":
            return soft_threshold(y, step * self.lam)
        if self.kind == "projected_box":
            return np.minimum(np.maximum(y, self.lower[rows]), self.upper[rows])
        return y

    def _check_x(self, x):
        x = np.asarray(x, dtype=np.float64)
        if x.shape != (self.layout.N,):
            raise LayoutMismatch(f"x has shape {x.shape}, operator expects ({self.layout.N},)")
        return x

    def apply_T(self, x) -> np.ndarray:
        x = self._check_x(x)
        out = self._T_rows(x, slice(None))
        if not np.all(np.isfinite(out)):
            raise NonFinite("Tx is not finite")
        return out

    def _S_rows(self, x: np.ndarray, rows: slice) -> np.ndarray:
        # the affine kinds have S = x - T x in closed form; skip the cancellation
        if self.kind in ("grad_quadratic", "linear_psd"):
            return (2.0 / self.L) * (self.A[rows] @ x - self.b[rows])
        if self.kind == "linear_jacobi":
            return (self.A[rows] @ x - self.b[rows]) / self._diag[rows]
        return x[rows] - self._T_rows(x, rows)

    def apply_S(self, x) -> np.ndarray:
        x = self._check_x(x)
        return self._S_rows(x, slice(None))

    def apply_S_block(self, x, i: int) -> np.ndarray:
        """Block ``i`` (0-based) of ``Sx``, touching only that block's rows."""
        if not 0 <= i < self.layout.m:
            raise BlockOutOfRange(f"block {i} not in [0, {self.layout.m})")
        return self._S_rows(x, self.layout.block_slice(i))

    def fpr_norm(self, x) -> float:
        """Fixed-point residual ``||x - Tx||``."""
        return float(np.linalg.norm(self.apply_S(x)))


def _layout(layout, b):
    if layout is None:
        return BlockLayout.uniform(np.asarray(b).reshape(-1).shape[0])
    return layout


@dataclass
class FixedPointProblem:
    op: OperatorSpec
    known_solution: np.ndarray | None = None

    def __post_init__(self):
        if self.known_solution is not None:
            xs = as_block_vector(self.known_solution, self.op.layout)
            res = self.op.fpr_norm(xs)
            if res > 1e-9 * (1 + np.linalg.norm(xs)):
                raise InvalidOperator(f"known solution has residual {res:.3g}")
            self.known_solution = xs


@dataclass
class NonexpansiveReport:
    trials: int
    max_ratio: float


def check_nonexpansive(op: OperatorSpec, trials: int = 1000, seed: int = 0,
                       scale: float = 10.0) -> NonexpansiveReport:
    """Sample random pairs and confirm ``||Tx - Ty|| <= (1 + 1e-10) ||x - y||``.

    Pairs mix wide draws (scale ``scale``) with nearby points, so both the
    linear part and the kinks of prox/projection steps get exercised.
    """
    if trials < 1:
        raise ValueError("trials must be >= 1")
    rng = np.random.default_rng(seed)
    n = op.layout.N
    worst = 0.0
    for t in range(trials):
        x = scale * rng.standard_normal(n)
        spread = scale if t % 2 == 0 else scale * 10.0 ** rng.uniform(-6, 0)
        y = x + spread * rng.standard_normal(n)
        dxy = np.linalg.norm(x - y)
        if dxy == 0:
            continue
        ratio = np.linalg.norm(op.apply_T(x) - op.apply_T(y)) / dxy
        worst = max(worst, ratio)
        if ratio > 1 + 1e-10:
            raise NonexpansivenessViolated(ratio, x, y)
    return NonexpansiveReport(trials, float(worst))


def solve_reference(op: OperatorSpec, tol: float = 1e-11, x0=None, eta: float = 0.5,
                    max_iter: int = 10_000_000) -> np.ndarray:
    """Synchronous KM iteration ``x <- x - eta S x`` until ``||Sx|| <= tol``."""
    if tol <= 0:
        raise ValueError("tol must be positive")
    x = np.zeros(op.layout.N) if x0 is None else np.array(x0, dtype=np.float64)
    for _ in range(max_iter):
        s = op.apply_S(x)
        if np.linalg.norm(s) <= tol:
            return x
        x = x - eta * s
    raise MaxIterationsExceeded(f"||Sx|| still above {tol} after {max_iter} iterations")


# -- shipped instances ----------------------------------------------------

def random_spd(n: int, cond: float = 10.0, seed: int = 0) -> np.ndarray:
    """Symmetric positive definite matrix with eigenvalues spread over [1, cond]."""
    rng = np.random.default_rng(seed)
    q, _ = np.linalg.qr(rng.standard_normal((n, n)))
    eig = np.linspace(1.0, cond, n)
    A = (q * eig) @ q.T
    return (A + A.T) / 2


def shipped_instances(n: int = 8, seed: int = 0) -> dict[str, OperatorSpec]:
    """One valid instance of every kind, used by the test-suite and demos."""
    rng = np.random.default_rng(seed)
    A = random_spd(n, cond=10.0, seed=seed)
    lam_max = float(np.linalg.eigvalsh(A).max())
    b = rng.standard_normal(n)
    # constant diagonal keeps D^-1 R symmetric, so rho <= 1 gives ||D^-1 R||_2 <= 1
    J = 0.4 * (A - np.diag(np.diag(A))) / max(1e-12, np.abs(A - np.diag(np.diag(A))).sum(axis=1).max())
    J = J + np.eye(n)
    return {
        "grad_quadratic": OperatorSpec.grad_quadratic(A, b, L=lam_max),
        "forward_backward": OperatorSpec.forward_backward(A, b, L=lam_max, lam=0.3),
        "projected_box": OperatorSpec.projected_box(A, b, L=lam_max, lower=-0.2, upper=0.2),
        "linear_psd": OperatorSpec.linear_psd(A, b, M=lam_max),
        "linear_jacobi": OperatorSpec.linear_jacobi(J, b),
    }
