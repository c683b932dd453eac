"""Compose/apply microbenchmarks versus batch size.

Three execution strategies are compared on identical inputs:

* ``scalar-loop``: a Python loop over :class:`Rotation` / :class:`RigidTransform`
* ``batch``: one vectorized call on :class:`RotationBatch` / :class:`TransformBatch`
* ``parallel-batch``: the vectorized kernel split across worker threads

Before timing, each strategy's output is compared for exact equality with
the scalar loop (on every index up to ``check_full_limit`` elements, on a
fixed index sample beyond that).
"""

from __future__ import annotations

import csv
import io
import logging
import os
import platform
import statistics
import time
from dataclasses import dataclass, field
from datetime import datetime, timezone
from typing import Callable, Sequence

import numpy as np

from rigidiff.batch import (
    RotationBatch,
    TransformBatch,
    batch_apply,
    batch_compose,
    default_workers,
    tf_batch_apply,
    tf_batch_compose,
)
from rigidiff.rotation import Rotation
from rigidiff.transform import RigidTransform

log = logging.getLogger(__name__)

OPERATIONS = ("rotation-compose", "rotation-apply", "transform-compose", "transform-apply")
STRATEGIES = ("scalar-loop", "batch", "parallel-batch")
DEFAULT_GRID = tuple(10**k for k in range(8))
CSV_HEADER = ("operation", "strategy", "N", "median_s", "min_s", "ops_per_s", "host")


def host_descriptor() -> str:
    return f"{platform.node() or 'unknown'}/{platform.machine()}/{os.cpu_count() or 1}cpu"


@dataclass
class BenchSpec:
    operations: Sequence[str] = OPERATIONS
    n_grid: Sequence[int] = DEFAULT_GRID
    strategies: Sequence[str] = STRATEGIES
    warmup: int = 1
    repetitions: int = 5
    seed: int = 0
    workers: int = field(default_factory=default_workers)
    check_full_limit: int = 100_000
    check_sample: int = 4096

    def __post_init__(self):
        if isinstance(self.operations, str):
            self.operations = (self.operations,)
        if isinstance(self.strategies, str):
            self.strategies = (self.strategies,)
        for op in self.operations:
            if op not in OPERATIONS:
                raise ValueError(f"unknown operation {op!r}; choose from {', '.join(OPERATIONS)}")
        for s in self.strategies:
            if s not in STRATEGIES:
                raise ValueError(f"unknown strategy {s!r}; choose from {', '.join(STRATEGIES)}")
        grid = [int(n) for n in self.n_grid]
        if not grid or any(n < 1 for n in grid) or any(b <= a for a, b in zip(grid, grid[1:])):
            raise ValueError("N-grid must be a nonempty, strictly ascending list of positive sizes")
        self.n_grid = tuple(grid)
        if self.repetitions < 5:
            raise ValueError("repetitions must be at least 5")
        if self.warmup < 0:
            raise ValueError("warmup must be nonnegative")
        if self.workers < 1:
            raise ValueError("workers must be positive")


@dataclass(frozen=True)
class BenchRecord:
    operation: str
    strategy: str
    N: int
    median_s: float
    min_s: float
    ops_per_s: float
    timestamp: str
    host: str


class EquivalenceError(AssertionError):
    pass


def _random_inputs(op: str, n: int, seed: int) -> dict:
    rng = np.random.default_rng([seed, n, OPERATIONS.index(op)])
    qa = rng.normal(size=(n, 4))
    qb = rng.normal(size=(n, 4))
    data = {"qa": qa / np.linalg.norm(qa, axis=1, keepdims=True)}
    if op.endswith("compose"):
        data["qb"] = qb / np.linalg.norm(qb, axis=1, keepdims=True)
    else:
        data["v"] = rng.normal(size=(n, 3))
    if op.startswith("transform"):
        data["ta"] = rng.normal(size=(n, 3))
        if op.endswith("compose"):
            data["tb"] = rng.normal(size=(n, 3))
    return data


def _scalar_objects(op: str, data: dict, idx=None) -> tuple:
    def sel(a):
        return a if idx is None else a[idx]

    def rots(key):
        return [Rotation._raw(tuple(q)) for q in sel(data[key]).tolist()]

    if op == "rotation-compose":
        return rots("qa"), rots("qb")
    if op == "rotation-apply":
        return rots("qa"), [tuple(v) for v in sel(data["v"]).tolist()]
    ta = [RigidTransform(r, tuple(t)) for r, t in zip(rots("qa"), sel(data["ta"]).tolist())]
    if op == "transform-compose":
        tb = [RigidTransform(r, tuple(t)) for r, t in zip(rots("qb"), sel(data["tb"]).tolist())]
        return ta, tb
    return ta, [tuple(v) for v in sel(data["v"]).tolist()]


def _scalar_runner(op: str, data: dict, idx=None) -> Callable[[], list]:
    a, b = _scalar_objects(op, data, idx)
    if op.endswith("compose"):
        return lambda: [x * y for x, y in zip(a, b)]
    return lambda: [x.apply(y) for x, y in zip(a, b)]


def _batch_runner(op: str, data: dict, workers: int) -> Callable:
    # raw lanes from already-normalized inputs; construction stays outside the timer
    def rot(key):
        q = data[key]
        return RotationBatch._raw(tuple(np.ascontiguousarray(q[:, i]) for i in range(4)))

    if op == "rotation-compose":
        a, b = rot("qa"), rot("qb")
        return lambda: batch_compose(a, b, workers=workers)
    if op == "rotation-apply":
        a, v = rot("qa"), data["v"]
        return lambda: batch_apply(a, v, workers=workers)
    ta = TransformBatch(rot("qa"), data["ta"])
    if op == "transform-compose":
        tb = TransformBatch(rot("qb"), data["tb"])
        return lambda: tf_batch_compose(ta, tb, workers=workers)
    v = data["v"]
    return lambda: tf_batch_apply(ta, v, workers=workers)


def _as_rows(op: str, out) -> np.ndarray:
    """Strategy output as an ``(N, k)`` float array for exact comparison."""
    if isinstance(out, list):
        if op == "rotation-compose":
            return np.array([r.as_quat() for r in out])
        if op == "transform-compose":
            return np.array([(*t.rotation.as_quat(), *t.translation) for t in out])
        return np.array(out)
    if isinstance(out, RotationBatch):
        return out.as_quat()
    if isinstance(out, TransformBatch):
        return np.concatenate([out.rotation.as_quat(), out.translation], axis=-1)
    return np.asarray(out)


def _check_equivalence(op: str, strategy: str, n: int, out, reference: np.ndarray, idx) -> None:
    rows = _as_rows(op, out)
    if rows.shape[0] != n:
        raise EquivalenceError(f"{op}/{strategy}: expected {n} outputs, got {rows.shape[0]}")
    got = rows if idx is None else rows[idx]
    if not np.array_equal(got, reference):
        bad = int(np.argwhere(np.any(got != reference, axis=-1))[0, 0])
        raise EquivalenceError(f"{op}/{strategy} N={n}: output differs from scalar loop at row {bad}")


def _time(fn: Callable, warmup: int, reps: int) -> list[float]:
    for _ in range(warmup):
        fn()
    times = []
    for _ in range(reps):
        t0 = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t0)
    return times


def run_bench(spec: BenchSpec, diagnostics: list | None = None) -> list[BenchRecord]:
    """Time every (operation, N, strategy) in ``spec``.

    Sizes that cannot be allocated are skipped; a message is appended to
    ``diagnostics`` (if given) and logged as a warning.
    """
    host = host_descriptor()
    records = []
    for op in spec.operations:
        for n in spec.n_grid:
            try:
                data = _random_inputs(op, n, spec.seed)
                idx = None
                if n > spec.check_full_limit:
                    idx = np.unique(np.linspace(0, n - 1, spec.check_sample).astype(np.int64))
                reference = _as_rows(op, _scalar_runner(op, data, idx)())
                for strategy in spec.strategies:
                    if strategy == "scalar-loop":
                        fn = _scalar_runner(op, data)
                    else:
                        workers = spec.workers if strategy == "parallel-batch" else 1
                        fn = _batch_runner(op, data, workers)
                    _check_equivalence(op, strategy, n, fn(), reference, idx)
                    times = _time(fn, spec.warmup, spec.repetitions)
                    med = statistics.median(times)
                    records.append(
                        BenchRecord(
                            operation=op,
                            strategy=strategy,
                            N=n,
                            median_s=med,
                            min_s=min(times),
                            ops_per_s=n / med,
                            timestamp=datetime.now(timezone.utc).isoformat(),
                            host=host,
                        )
                    )
                    log.info("%s %s N=%d median %.3g s", op, strategy, n, med)
            except MemoryError:
                msg = f"skipped {op} N={n}: allocation failed"
                log.warning(msg)
                if diagnostics is not None:
                    diagnostics.append(msg)
    return records


def emit_csv(records: Sequence[BenchRecord]) -> bytes:
    if not records:
        raise ValueError("emit_csv needs at least one record")
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_HEADER)
    for r in records:
        w.writerow(
            [r.operation, r.strategy, r.N, f"{r.median_s:.17g}", f"{r.min_s:.17g}", f"{r.ops_per_s:.17g}", r.host]
        )
    return buf.getvalue().encode("utf-8")


def parse_csv(data: bytes) -> list[dict]:
    rows = list(csv.DictReader(io.StringIO(data.decode("utf-8"))))
    for r in rows:
        r["N"] = int(r["N"])
        for k in ("median_s", "min_s", "ops_per_s"):
            r[k] = float(r[k])
    return rows
