"""Shared-memory ARock with ``p`` worker threads.

Workers share one iterate ``x``.  Each worker repeatedly

1. notes the global update counter ``g`` and reads ``x`` segment by segment
   without any lock, so other workers may commit between segments (an
   inconsistent read).  Each segment (a run of whole blocks) is read under a
   sequence lock: the copy is retried when the segment's version is odd
   (write in progress) or changed during the copy, so no block is ever torn;
2. evaluates ``S_i`` at a uniformly random block ``i`` of that read;
3. takes the commit lock, fetches ``k`` from the counter, writes
   ``x_i <- x_i - eta S_i(xhat)``, bumps the block version and records the
   measured delay vector, then releases the lock.

The measured delay of block ``b`` at update ``k`` is ``k - g`` when ``b`` was
written after the read began and ``0`` otherwise.  It is an upper bound on
the true age of the block that was read.

Deterministic policies get the worker's previously measured current delay,
because the delay of the update in flight is only known once it lands.
Worker streams come from ``numpy.random.SeedSequence(seed).spawn(p)``, so a
run is replayable in distribution though not bit for bit.
"""
from __future__ import annotations

import math
import sys
import threading
import time

import numpy as np

from .engine import DIVERGENCE_LIMIT, RunConfig, Trace, _Recorder, _solution, streams
from .errors import DivergenceDetected, WorkerPanic
from .stepsize import StepSizePolicy


class _Shared:
    def __init__(self, x0, m, nseg):
        self.x = x0.copy()
        self.versions = np.zeros(m, dtype=np.int64)
        self.seg_versions = [0] * nseg
        self.last_write = np.full(m, -1, dtype=np.int64)
        self.counter = 0
        self.lock = threading.Lock()
        self.stop = False
        self.error: BaseException | None = None


def _read(shared: _Shared, segments) -> np.ndarray:
    out = np.empty_like(shared.x)
    seq = shared.seg_versions
    for s, sl in enumerate(segments):
        while True:
            v0 = seq[s]
            if v0 & 1:
                continue
            out[sl] = shared.x[sl]
            if seq[s] == v0:
                break
    return out


def run_concurrent(config: RunConfig, read_segments: int | None = None,
                   switch_interval: float = 5e-6) -> Trace:
    """Run ARock on ``config.workers`` threads until ``config.iterations`` updates have landed."""
    op = config.problem.op
    layout = op.layout
    m, p = layout.m, config.workers
    total = config.iterations
    x_star = _solution(config, False)
    rec = _Recorder(total, config.metrics_every, m)
    counts = [0] * p
    policy = config.policy
    deterministic = isinstance(policy, StepSizePolicy) and policy.mode == "deterministic"
    guard = DIVERGENCE_LIMIT / math.sqrt(layout.N)
    max_delay = [0]

    nseg = read_segments or min(m, 4)
    edges = np.linspace(0, m, nseg + 1).astype(int)
    edges = np.unique(edges)
    segments = [slice(int(layout.offsets[a]), int(layout.offsets[b])) for a, b in zip(edges[:-1], edges[1:])]
    seg_of = np.searchsorted(edges, np.arange(m), side="right") - 1
    shared = _Shared(config.initial_point(), m, len(segments))
    slices = [layout.block_slice(i) for i in range(m)]

    def worker(w: int, rng: np.random.Generator):
        prev_j = 0
        local = 0
        etas = {}
        seq = shared.seg_versions
        try:
            while not shared.stop:
                g = shared.counter
                if g >= total:
                    break
                i = int(rng.integers(m))
                key = prev_j if deterministic else 0
                eta = etas.get(key)
                if eta is None:
                    eta = etas[key] = config.step(key)
                xhat = _read(shared, segments)
                s_i = op.apply_S_block(xhat, i)
                sl = slices[i]
                with shared.lock:
                    k = shared.counter
                    if k >= total or shared.stop:
                        break
                    d = np.where(shared.last_write >= g, k - g, 0)
                    j = int(d.max())
                    if rec.due(k):
                        dist = float(np.linalg.norm(shared.x - x_star)) if x_star is not None else np.nan
                        rec.add(k, i, j, eta, op.fpr_norm(shared.x), dist, d=d)
                    seg = seg_of[i]
                    seq[seg] += 1
                    shared.versions[i] += 1
                    new = shared.x[sl] - eta * s_i
                    shared.x[sl] = new
                    shared.versions[i] += 1
                    seq[seg] += 1
                    shared.last_write[i] = k
                    shared.counter = k + 1
                    local += 1
                    if j > max_delay[0]:
                        max_delay[0] = j
                    if not np.abs(new).max() <= guard:
                        norm = float(np.linalg.norm(shared.x))
                        if norm > DIVERGENCE_LIMIT or not math.isfinite(norm):
                            raise DivergenceDetected(k + 1, norm)
                prev_j = j
        except BaseException as exc:  # surfaced by the coordinator
            with shared.lock:
                if shared.error is None:
                    shared.error = exc
                shared.stop = True
        finally:
            counts[w] = local

    old_interval = sys.getswitchinterval()
    sys.setswitchinterval(switch_interval)
    t0 = time.perf_counter()
    try:
        threads = [threading.Thread(target=worker, args=(w, rng), daemon=True)
                   for w, rng in enumerate(streams(config.seed, p))]
        for t in threads:
            t.start()
        for t in threads:
            t.join()
    finally:
        sys.setswitchinterval(old_interval)
    wall = time.perf_counter() - t0

    x = shared.x
    info = {"worker_updates": list(counts), "global_counter": shared.counter,
            "lost_updates": shared.counter - sum(counts), "max_measured_delay": max_delay[0],
            "workers": p, "seed": config.seed}
    final = op.fpr_norm(x) if np.all(np.isfinite(x)) else math.inf
    trace = rec.trace(x, shared.counter, final, wall_time=wall, mode="concurrent", info=info)
    if shared.error is not None:
        err = shared.error
        if isinstance(err, DivergenceDetected):
            err.trace = trace
            raise err
        raise WorkerPanic(f"worker failed: {err!r}", trace) from err
    return trace
