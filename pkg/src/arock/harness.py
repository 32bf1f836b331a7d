"""Experiment plumbing: key-value configs, data files, trace CSVs, the step-size table.

Config files hold one ``key = value`` per line; ``#`` starts a comment.
Relative file paths are resolved against the config file's directory.

Matrix files: the first line is ``N N``, followed by ``N`` rows of ``N``
numbers.  Vector files (``problem.b_file``, ``problem.x0``) are whitespace
separated numbers.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .blockvec import BlockLayout
from .delays import DelayModel, tail_probability
from .engine import RunConfig, Trace
from .errors import ARockError, ConfigError, NonSummableTail
from .operators import FixedPointProblem, OperatorSpec, power_iteration
from .stepsize import DEFAULT_TRUNCATION, make_policy, stochastic_h_large

TRACE_HEADER = "k,i_k,j_k,eta_k,fpr_norm,dist_to_sol,xi"


def _bool(v: str) -> bool:
    s = str(v).strip().lower()
    if s in ("1", "true", "yes", "on"):
        return True
    if s in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {v!r}")


def _bounds(v: str) -> tuple[float, float]:
    parts = [p for p in str(v).replace(",", " ").split() if p]
    if len(parts) != 2:
        raise ValueError("expected 'lower, upper'")
    return float(parts[0]), float(parts[1])


# key -> (parser, default); a default of None means "unset"
SCHEMA = {
    "problem.kind": (str, None),
    "problem.matrix_file": (str, None),
    "problem.b_file": (str, None),
    "problem.L": (float, None),
    "problem.lambda": (float, 0.0),
    "problem.bounds": (_bounds, None),
    "problem.block_size": (int, 1),
    "problem.x0": (str, None),
    "delay.kind": (str, "zero"),
    "delay.tau": (int, 0),
    "delay.r": (float, 0.5),
    "delay.C": (float, None),
    "delay.B": (int, None),
    "delay.schedule_file": (str, None),
    "step.kind": (str, None),
    "step.c": (float, 0.9),
    "step.gamma": (float, 1.0),
    "step.epsilon": (str, None),
    "step.truncation": (int, DEFAULT_TRUNCATION),
    "run.mode": (str, "sim"),
    "run.iterations": (int, 10_000),
    "run.workers": (int, 1),
    "run.seed": (int, 0),
    "run.metrics_every": (int, 1),
    "run.window": (int, None),
    "run.lyapunov_truncation": (int, None),
    "out.trace_path": (str, None),
}
FILE_KEYS = ("problem.matrix_file", "problem.b_file", "problem.x0", "delay.schedule_file")


def _fmt(v) -> str:
    if isinstance(v, tuple):
        return ", ".join(_fmt(x) for x in v)
    if isinstance(v, float):
        return repr(v)
    return str(v)


@dataclass
class ExperimentConfig:
    """Parsed key-value config; only explicitly set keys are stored."""

    values: dict = field(default_factory=dict)
    base_dir: Path = field(default=Path("."), compare=False)

    @classmethod
    def parse(cls, text: str, base_dir=".") -> "ExperimentConfig":
        values = {}
        for n, raw in enumerate(text.splitlines(), 1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ConfigError(f"line {n}: expected 'key = value', got {raw.strip()!r}")
            key, val = (s.strip() for s in line.split("=", 1))
            if key not in SCHEMA:
                raise ConfigError(f"line {n}: unknown key {key!r}")
            if key in values:
                raise ConfigError(f"line {n}: duplicate key {key!r}")
            try:
                values[key] = SCHEMA[key][0](val)
            except ValueError as exc:
                raise ConfigError(f"{key}: cannot parse {val!r} ({exc})") from None
        return cls(values, Path(base_dir))

    @classmethod
    def load(cls, path) -> "ExperimentConfig":
        path = Path(path)
        try:
            text = path.read_text()
        except OSError as exc:
            raise ConfigError(f"cannot read config {path}: {exc.strerror}") from None
        return cls.parse(text, path.parent)

    def serialize(self) -> str:
        return "".join(f"{k} = {_fmt(self.values[k])}\n" for k in SCHEMA if k in self.values)

    def get(self, key):
        return self.values.get(key, SCHEMA[key][1])

    def with_overrides(self, **kw) -> "ExperimentConfig":
        vals = dict(self.values)
        for k, v in kw.items():
            if v is not None:
                vals[k] = v
        return ExperimentConfig(vals, self.base_dir)

    def path(self, key) -> Path | None:
        v = self.get(key)
        if v is None:
            return None
        p = Path(v)
        p = p if p.is_absolute() else self.base_dir / p
        if not p.is_file():
            raise ConfigError(f"{key}: file not found: {p}")
        return p


# -- data files -----------------------------------------------------------

def load_matrix(path) -> np.ndarray:
    lines = [ln for ln in Path(path).read_text().splitlines() if ln.strip()]
    if not lines:
        raise ValueError(f"{path}: empty matrix file")
    head = lines[0].split()
    if len(head) != 2 or head[0] != head[1]:
        raise ValueError(f"{path}: first line must be 'N N'")
    n = int(head[0])
    rows = [[float(t) for t in ln.split()] for ln in lines[1:]]
    if len(rows) != n or any(len(r) != n for r in rows):
        raise ValueError(f"{path}: expected {n} rows of {n} numbers")
    return np.array(rows)


def save_matrix(path, A) -> None:
    A = np.asarray(A, dtype=np.float64)
    n = A.shape[0]
    with open(path, "w") as fh:
        fh.write(f"{n} {n}\n")
        for row in A:
            fh.write(" ".join(repr(float(v)) for v in row) + "\n")


def load_vector(path) -> np.ndarray:
    return np.array([float(t) for t in Path(path).read_text().split()])


def save_vector(path, v) -> None:
    Path(path).write_text(" ".join(repr(float(x)) for x in np.ravel(v)) + "\n")


# -- building runs --------------------------------------------------------

def build_operator(cfg: ExperimentConfig) -> OperatorSpec:
    kind = cfg.get("problem.kind")
    if kind is None:
        raise ConfigError("problem.kind: required")
    mpath = cfg.path("problem.matrix_file")
    if mpath is None:
        raise ConfigError("problem.matrix_file: required")
    try:
        A = load_matrix(mpath)
    except ValueError as exc:
        raise ConfigError(f"problem.matrix_file: {exc}") from None
    n = A.shape[0]
    bpath = cfg.path("problem.b_file")
    b = np.zeros(n) if bpath is None else load_vector(bpath)
    if b.shape != (n,):
        raise ConfigError(f"problem.b_file: expected {n} numbers, got {b.size}")
    layout = BlockLayout.for_dimension(n, cfg.get("problem.block_size"))
    L = cfg.get("problem.L")
    if L is None and kind != "linear_jacobi":
        L = power_iteration((A + A.T) / 2) * (1 + 1e-6)
    try:
        if kind == "grad_quadratic":
            return OperatorSpec.grad_quadratic(A, b, L, layout=layout)
        if kind == "forward_backward":
            return OperatorSpec.forward_backward(A, b, L, cfg.get("problem.lambda"), layout=layout)
        if kind == "projected_box":
            bounds = cfg.get("problem.bounds")
            if bounds is None:
                raise ConfigError("problem.bounds: required for projected_box")
            return OperatorSpec.projected_box(A, b, L, bounds[0], bounds[1], layout=layout)
        if kind == "linear_psd":
            return OperatorSpec.linear_psd(A, b, L, layout=layout)
        if kind == "linear_jacobi":
            return OperatorSpec.linear_jacobi(A, b, layout=layout)
    except ConfigError:
        raise
    except ARockError as exc:
        raise ConfigError(f"problem: {exc}") from None
    raise ConfigError(f"problem.kind: unknown operator kind {kind!r}")


def build_delays(cfg: ExperimentConfig, m: int) -> DelayModel:
    kind = cfg.get("delay.kind")
    try:
        if kind == "zero":
            return DelayModel.zero(m)
        if kind == "bounded":
            return DelayModel.bounded(m, cfg.get("delay.tau"), cfg.get("delay.B"))
        if kind == "uniform":
            return DelayModel.uniform(m, cfg.get("delay.tau"), cfg.get("delay.B"))
        if kind == "geometric":
            B = cfg.get("delay.B")
            return DelayModel.geometric(m, cfg.get("delay.r"), cfg.get("delay.C"), 2 if B is None else B)
        if kind == "schedule":
            p = cfg.path("delay.schedule_file")
            if p is None:
                raise ConfigError("delay.schedule_file: required for delay.kind = schedule")
            model = DelayModel.from_schedule_file(p)
            if model.m != m:
                raise ConfigError(f"delay.schedule_file: rows have {model.m} entries, problem has m={m}")
            return model
    except ConfigError:
        raise
    except (ARockError, ValueError) as exc:
        raise ConfigError(f"delay: {exc}") from None
    raise ConfigError(f"delay.kind: unknown delay kind {kind!r}")


def build_policy(cfg: ExperimentConfig, model: DelayModel):
    m = model.m
    kind = cfg.get("step.kind") or ("stochastic_large" if model.stochastic else "deterministic_adaptive")
    tail = tail_probability(model) if model.stochastic else None
    eps = cfg.get("step.epsilon")
    if eps is not None and eps.lower() not in ("weakest", "largest", "powerlaw"):
        p = cfg.path("step.epsilon")
        eps = load_vector(p)
    if kind == "generic_stochastic" and eps is None:
        eps = "largest"
    if kind == "generic_deterministic" and eps is None:
        eps = "powerlaw"
    tau = None
    if kind == "bounded_truncated":
        tau = model.max_delay() if model.bounded_support else None
        if eps is None and tau is not None:
            eps = np.full(tau, math.sqrt(m))
    try:
        return make_policy(kind, cfg.get("step.c"), m, tail=tail, gamma=cfg.get("step.gamma"),
                           epsilon=eps, truncation=cfg.get("step.truncation"), tau=tau)
    except ARockError as exc:
        raise ConfigError(f"step: {exc}") from None


def build_run(cfg: ExperimentConfig, check_descent: bool = False) -> RunConfig:
    """Turn a parsed config into an engine :class:`RunConfig` (raises :class:`ConfigError`)."""
    op = build_operator(cfg)
    model = build_delays(cfg, op.m)
    policy = build_policy(cfg, model)
    x0p = cfg.path("problem.x0")
    x0 = None if x0p is None else load_vector(x0p)
    mode = {"sim": "simulated", "simulated": "simulated", "concurrent": "concurrent"}.get(cfg.get("run.mode"))
    if mode is None:
        raise ConfigError(f"run.mode: expected sim or concurrent, got {cfg.get('run.mode')!r}")
    try:
        return RunConfig(FixedPointProblem(op), model, policy, cfg.get("run.iterations"),
                         seed=cfg.get("run.seed"), mode=mode, workers=cfg.get("run.workers"),
                         metrics_every=cfg.get("run.metrics_every"), x0=x0,
                         check_descent=check_descent, record_xi=check_descent,
                         lyapunov_truncation=cfg.get("run.lyapunov_truncation"),
                         window=cfg.get("run.window"))
    except ARockError as exc:
        raise ConfigError(f"run: {exc}") from None


# -- traces ---------------------------------------------------------------

def _num(v) -> str:
    return "" if v is None or (isinstance(v, float) and math.isnan(v)) else repr(float(v))


def emit_trace(trace: Trace, path, wall_time: bool = True) -> Path:
    """Write the trace as CSV plus a ``#summary`` line.

    ``wall_time=False`` leaves the timing out of the file, which keeps
    repeated simulated runs byte-identical.
    """
    path = Path(path)
    lines = [TRACE_HEADER]
    for r in range(len(trace)):
        lines.append(f"{int(trace.k[r])},{int(trace.i[r])},{int(trace.j[r])},{_num(trace.eta[r])},"
                     f"{_num(trace.fpr[r])},{_num(trace.dist[r])},{_num(trace.xi[r])}")
    summary = [f"final_fpr={_num(trace.final_fpr)}", f"updates={trace.updates}"]
    if wall_time:
        summary.append(f"wall_time={trace.wall_time:.6f}")
    if trace.mode == "concurrent":
        summary += [f"lost_updates={trace.info.get('lost_updates')}",
                    f"max_measured_delay={trace.info.get('max_measured_delay')}"]
    lines.append("#summary," + ",".join(summary))
    path.write_text("\n".join(lines) + "\n")
    return path


def read_trace(path) -> tuple[np.ndarray, dict]:
    """Load an emitted trace: ``(rows, summary)``; empty cells become ``nan``."""
    rows, summary = [], {}
    for ln in Path(path).read_text().splitlines()[1:]:
        if ln.startswith("#summary"):
            for item in ln.split(",")[1:]:
                k, v = item.split("=", 1)
                summary[k] = v
            continue
        rows.append([float(c) if c else np.nan for c in ln.split(",")])
    return np.array(rows).reshape(-1, 7), summary


# -- step-size table ------------------------------------------------------

def auto_truncation(fn, start: int = DEFAULT_TRUNCATION, limit: int = 1 << 20):
    """Evaluate ``fn(K)`` for ``K = start, 2 start, ...`` until the remainder check passes."""
    K = start
    while True:
        try:
            return fn(K), K
        except NonSummableTail:
            if K >= limit:
                raise
            K *= 2


@dataclass
class Table2Row:
    distribution: str
    parameter: float
    bound: float
    h: float

    @property
    def holds(self) -> bool:
        return self.h >= self.bound - 1e-12


def table2_rows(m: int, taus=(1, 2, 4, 8), r_values=(0.25, 0.5, 0.9), C: float = 1.0) -> list[Table2Row]:
    """Closed-form lower bounds next to ``stochastic_h_large`` for example delay laws."""
    if m < 1:
        raise ValueError("m must be >= 1")
    sm = math.sqrt(m)
    rows = []
    for tau in taus:
        h = stochastic_h_large(tail_probability(DelayModel.bounded(m, tau)), m, max(DEFAULT_TRUNCATION, 2 * tau))
        rows.append(Table2Row("bounded", tau, 1 / (1 + 2 * tau / sm), h))
    for tau in taus:
        h = stochastic_h_large(tail_probability(DelayModel.uniform(m, tau)), m, max(DEFAULT_TRUNCATION, 2 * tau))
        rows.append(Table2Row("uniform", tau, 1 / (1 + 4 * tau / (3 * sm)), h))
    for r in r_values:
        tail = tail_probability(DelayModel.geometric(m, r, C=C))
        h, _ = auto_truncation(lambda K: stochastic_h_large(tail, m, K))
        sr = math.sqrt(r)
        rows.append(Table2Row("geometric", r, 1 / (1 + 2 * math.sqrt(C / m) * sr / (1 - sr) ** 1.5), h))
    return rows


def table2_report(m: int, taus=(1, 2, 4, 8), r_values=(0.25, 0.5, 0.9), C: float = 1.0):
    """Formatted table and the rows behind it."""
    rows = table2_rows(m, taus, r_values, C)
    out = [f"step sizes for m = {m} (geometric rows use C = {C:g})",
           f"{'distribution':<12} {'param':>6} {'bound':>12} {'computed h':>12}  holds"]
    for r in rows:
        out.append(f"{r.distribution:<12} {r.parameter:>6g} {r.bound:>12.8f} {r.h:>12.8f}  "
                   f"{'yes' if r.holds else 'NO'}")
    return "\n".join(out), rows
