"""Exception types raised across the package."""


class ARockError(Exception):
    """Base class for all errors raised by :mod:`arock`."""


class LayoutMismatch(ARockError, ValueError):
    pass


class NonFinite(ARockError, ValueError):
    pass


class WindowExceeded(ARockError, IndexError):
    pass


class NonConsecutiveIndex(ARockError, ValueError):
    pass


class BlockOutOfRange(ARockError, IndexError):
    pass


class NegativeThreshold(ARockError, ValueError):
    pass


class InvalidBox(ARockError, ValueError):
    pass


class InvalidOperator(ARockError, ValueError):
    """Operator data violates the kind's invariants (symmetry, PSD, L bound...)."""


class NonexpansivenessViolated(ARockError):
    """A sampled pair (x, y) with ||Tx - Ty|| > ||x - y||."""

    def __init__(self, ratio, x, y):
        super().__init__(f"||Tx-Ty||/||x-y|| = {ratio:.6g} > 1")
        self.ratio = ratio
        self.x = x
        self.y = y


class MaxIterationsExceeded(ARockError, RuntimeError):
    pass


class EmptySchedule(ARockError, ValueError):
    pass


class DeterministicModel(ARockError, ValueError):
    """Tail probabilities requested from a model that has no delay law."""


class NonSummableTail(ARockError, ValueError):
    pass


class SummabilityViolated(ARockError, ValueError):
    pass


class InvalidParameters(ARockError, ValueError):
    pass


class InvalidTruncation(ARockError, ValueError):
    pass


class EnumerationTooLarge(ARockError, ValueError):
    pass


class DescentViolated(ARockError):
    """Expected Lyapunov descent failed at step ``k``."""

    def __init__(self, k, delay, eta, slack):
        super().__init__(
            f"descent violated at k={k}: eta={eta:.6g}, slack={slack:.6g}, "
            f"delay={list(map(int, delay))}")
        self.k = k
        self.delay = delay
        self.eta = eta
        self.slack = slack


class DivergenceDetected(ARockError, RuntimeError):
    def __init__(self, k, norm, trace=None):
        super().__init__(f"||x|| = {norm:.3g} exceeded the divergence guard at k={k}")
        self.k = k
        self.norm = norm
        self.trace = trace


class WorkerPanic(ARockError, RuntimeError):
    def __init__(self, message, trace=None):
        super().__init__(message)
        self.trace = trace


class ConfigError(ARockError, ValueError):
    pass
