"""Parallel random block-coordinate forward-backward iteration.

Each iteration draws a set of blocks, evaluates every selected partial
gradient at the current point, applies the per-block prox, and then commits
the changed blocks. The monotone variant computes the objective change of
the candidate first and keeps the current point when the objective would go
up.
"""
from __future__ import annotations

import csv
import dataclasses
import hashlib
import json
import math
import os
import tempfile
import time
import warnings
from dataclasses import dataclass, field
from typing import Callable, List, Optional, Sequence

import numpy as np

from .core import BlockVector, DiagonalMetric, ValidationError
from .problems import CompositeProblem, OracleCache, project_start
from .sampling import SamplingScheme, Sampler, make_rng
from .smoothness import DEFAULT_GAMMA_MAX, SmoothnessCertificate, nu_s3

TELEMETRY_COLUMNS = ("iter", "epoch", "F", "residual_norm", "rejections", "wall_ms")
DRIFT_TOL = 1e-9


@dataclass
class SolverConfig:
    """Run parameters. Step sizes are ``delta / nu_i`` from ``certificate``."""

    delta: float
    certificate: SmoothnessCertificate
    scheme: SamplingScheme
    max_iters: int = 1000
    tol: Optional[float] = 1e-8
    f_target: Optional[float] = None
    monotone: bool = False
    seed: int = 0
    record_every: int = 100
    bitrepro: bool = True
    slack: float = 0.0
    gamma_max: float = DEFAULT_GAMMA_MAX

    def __post_init__(self):
        if not 0 < self.delta < 2:
            raise ValidationError(f"delta must lie in (0, 2), got {self.delta}")
        if self.max_iters < 0:
            raise ValidationError("max_iters must be nonnegative")
        if self.record_every < 1:
            raise ValidationError("record_every must be positive")
        if self.slack < 0:
            raise ValidationError("safeguard slack must be nonnegative")
        if self.certificate.nu.size != self.scheme.m:
            raise ValidationError("certificate and scheme disagree on the number of blocks")

    def stepsizes(self) -> np.ndarray:
        return self.certificate.stepsizes(self.delta, self.gamma_max)

    def to_json(self) -> dict:
        return {
            "delta": self.delta,
            "condition": self.certificate.condition.value,
            "certificate_provenance": _jsonable(self.certificate.provenance),
            "scheme": self.scheme.to_config(),
            "max_iters": self.max_iters,
            "tol": self.tol,
            "f_target": self.f_target,
            "monotone": self.monotone,
            "seed": self.seed,
            "record_every": self.record_every,
            "bitrepro": self.bitrepro,
            "slack": self.slack,
            "gamma_max": self.gamma_max,
        }


def _jsonable(obj):
    if isinstance(obj, dict):
        return {k: _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, (np.floating, np.integer)):
        return obj.item()
    return obj


@dataclass
class SolverState:
    cache: OracleCache
    gamma: np.ndarray
    gamma_coord: np.ndarray
    sampler: Sampler
    n: int = 0
    F_current: float = math.nan
    rejections: int = 0
    last_blocks: Optional[np.ndarray] = None
    last_accepted: bool = True

    @property
    def x(self) -> np.ndarray:
        return self.cache.x


def init_state(problem: CompositeProblem, config: SolverConfig, x0=None) -> SolverState:
    """Fresh state at ``x0`` (zero by default), projected into the prox domain."""
    part = problem.partition
    if config.scheme.m != part.m:
        raise ValidationError("scheme and problem disagree on the number of blocks")
    x0 = np.zeros(part.n_total) if x0 is None else np.array(x0, dtype=np.float64)
    if x0.shape != (part.n_total,):
        raise ValidationError(f"starting point must have {part.n_total} entries")
    x0 = project_start(problem, x0)
    cache = problem.smooth.init_cache(x0)
    gamma = config.stepsizes()
    state = SolverState(cache, gamma, part.expand(gamma), Sampler(config.scheme, make_rng(config.seed)))
    state.F_current = problem.objective_from_cache(cache)
    return state


def _candidate(state, problem, blocks):
    coords = problem.partition.coords(blocks)
    x_sel = state.cache.x[coords]
    steps = state.gamma_coord[coords]
    grad = problem.smooth.gradients(state.cache, coords)
    cand = problem.prox.prox_selected(blocks, coords, x_sel - steps * grad, steps)
    return coords, x_sel, grad, cand


def step(state: SolverState, problem: CompositeProblem, config: SolverConfig) -> SolverState:
    """One iteration: draw blocks, forward-backward on each, commit together."""
    blocks = state.sampler.draw_indices()
    coords, _, _, cand = _candidate(state, problem, blocks)
    problem.smooth.assign(state.cache, coords, cand)
    state.n += 1
    state.last_blocks = blocks
    state.last_accepted = True
    return state


def step_monotone(state: SolverState, problem: CompositeProblem, config: SolverConfig) -> SolverState:
    """One safeguarded iteration: keep the candidate only if F does not increase.

    The change ``F(candidate) - F(x)`` is computed locally from the selected
    blocks, so nothing has to be undone on rejection.
    """
    blocks = state.sampler.draw_indices()
    coords, x_sel, grad, cand = _candidate(state, problem, blocks)
    state.n += 1
    state.last_blocks = blocks
    if np.array_equal(cand, x_sel):
        state.last_accepted = True
        return state
    change = problem.smooth.value_change(state.cache, coords, cand, grad)
    change += problem.prox.value_change(coords, x_sel, cand)
    if change <= config.slack * abs(state.F_current):
        problem.smooth.assign(state.cache, coords, cand)
        state.F_current += change
        state.last_accepted = True
    else:
        state.rejections += 1
        state.last_accepted = False
    return state


def fb_residual(problem: CompositeProblem, cache: OracleCache, gamma: np.ndarray) -> float:
    """``||x - xbar||`` in the metric with weights ``1/gamma_i``, over all blocks."""
    part = problem.partition
    blocks = np.arange(part.m)
    coords = part.coords(blocks)
    steps = part.expand(gamma)
    x = cache.x
    grad = problem.smooth.gradients(cache, coords)
    xbar = problem.prox.prox_selected(blocks, coords, x - steps * grad, steps)
    diff = BlockVector(x - xbar, part)
    return math.sqrt(float(np.dot(1.0 / gamma, part.block_sq_norms(diff.data))))


@dataclass
class RunReport:
    """Telemetry and final point of one run."""

    rows: List[dict]
    x: np.ndarray
    seed: int
    config: dict
    input_hash: Optional[str] = None
    stopped_early: bool = False
    extra_columns: dict = field(default_factory=dict)

    def column(self, name: str) -> np.ndarray:
        if name in self.extra_columns:
            return np.asarray(self.extra_columns[name])
        return np.array([r[name] for r in self.rows], dtype=np.float64)

    @property
    def iters(self) -> np.ndarray:
        return self.column("iter").astype(np.int64)

    @property
    def F(self) -> np.ndarray:
        return self.column("F")

    def add_column(self, name: str, values: Sequence[float]) -> None:
        if len(values) != len(self.rows):
            raise ValidationError(f"column {name!r} needs {len(self.rows)} values")
        self.extra_columns[name] = np.asarray(values, dtype=np.float64)

    def write_csv(self, path) -> None:
        names = list(TELEMETRY_COLUMNS) + list(self.extra_columns)
        lines = [names]
        for k, row in enumerate(self.rows):
            vals = [row[c] for c in TELEMETRY_COLUMNS] + [self.extra_columns[c][k] for c in self.extra_columns]
            lines.append([_fmt(v) for v in vals])
        atomic_write_csv(path, lines)

    def metadata(self) -> dict:
        return {"seed": self.seed, "config": self.config, "input_hash": self.input_hash, "rows": len(self.rows)}

    def write_metadata(self, path) -> None:
        atomic_write_text(path, json.dumps(self.metadata(), indent=2, sort_keys=True))


def _fmt(v):
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return repr(float(v))


def atomic_write_text(path, text: str) -> None:
    path = os.fspath(path)
    directory = os.path.dirname(os.path.abspath(path))
    os.makedirs(directory, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".tmp-")
    try:
        with os.fdopen(fd, "w", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def atomic_write_csv(path, lines) -> None:
    import io

    buf = io.StringIO()
    csv.writer(buf, lineterminator="\n").writerows(lines)
    atomic_write_text(path, buf.getvalue())


def content_hash(*payloads: bytes) -> str:
    """Git-style blob hash (sha1 over a length header and the bytes)."""
    data = b"".join(payloads)
    return hashlib.sha1(b"blob %d\0" % len(data) + data).hexdigest()


def run(
    problem: CompositeProblem,
    config: SolverConfig,
    x0=None,
    callback: Optional[Callable[[SolverState], None]] = None,
    input_hash: Optional[str] = None,
) -> RunReport:
    """Iterate until ``max_iters`` or the stop rule fires.

    A telemetry row is written at iteration 0 and then every
    ``record_every`` iterations. The stop rule is checked at those rows:
    the full forward-backward residual falls below ``tol`` or ``F`` reaches
    ``f_target``. ``callback`` is invoked with the state at every row.
    """
    state = init_state(problem, config, x0)
    advance = step_monotone if config.monotone else step
    tau_bar = config.scheme.expected_size
    m = problem.m
    rows: List[dict] = []
    start = time.perf_counter()
    stopped = False

    def record():
        fresh = problem.objective_from_cache(state.cache)
        if config.monotone and abs(fresh - state.F_current) > DRIFT_TOL * max(1.0, abs(fresh)):
            warnings.warn(f"objective drift {fresh - state.F_current:.3e} at iteration {state.n}", RuntimeWarning)
        state.F_current = fresh
        res = fb_residual(problem, state.cache, state.gamma)
        rows.append(
            {
                "iter": state.n,
                "epoch": state.n * tau_bar / m,
                "F": fresh,
                "residual_norm": res,
                "rejections": state.rejections,
                "wall_ms": (time.perf_counter() - start) * 1e3,
            }
        )
        if callback is not None:
            callback(state)
        hit_tol = config.tol is not None and res <= config.tol
        hit_target = config.f_target is not None and fresh <= config.f_target
        return hit_tol or hit_target

    stopped = record()
    while not stopped and state.n < config.max_iters:
        advance(state, problem, config)
        if state.n % config.record_every == 0 or state.n == config.max_iters:
            stopped = record()
    return RunReport(rows, state.cache.x.copy(), config.seed, config.to_json(), input_hash, stopped and state.n < config.max_iters)


@dataclass
class AveragedReport:
    """Mean and standard error of the objective across seeds, row by row."""

    iters: np.ndarray
    epochs: np.ndarray
    mean_F: np.ndarray
    se_F: np.ndarray
    reports: List[RunReport]

    @property
    def seeds(self) -> List[int]:
        return [r.seed for r in self.reports]

    def mean_column(self, name: str) -> np.ndarray:
        return np.mean([r.column(name) for r in self.reports], axis=0)


def run_ensemble(problem: CompositeProblem, config: SolverConfig, seeds: Sequence[int], x0=None, workers: int = 1) -> AveragedReport:
    """One run per seed; all runs share the row layout, so stop rules are off.

    Runs may execute in a process pool of ``workers``; each run owns its
    generator, so results do not depend on scheduling.
    """
    if len(seeds) == 0:
        raise ValidationError("need at least one seed")
    configs = [dataclasses.replace(config, seed=int(s), tol=None, f_target=None) for s in seeds]
    if workers > 1 and len(configs) > 1:
        from concurrent.futures import ProcessPoolExecutor

        with ProcessPoolExecutor(max_workers=workers) as pool:
            reports = list(pool.map(_run_star, [(problem, c, x0) for c in configs]))
    else:
        reports = [run(problem, c, x0) for c in configs]
    F = np.array([r.F for r in reports])
    se = F.std(axis=0, ddof=1) / math.sqrt(len(reports)) if len(reports) > 1 else np.zeros(F.shape[1])
    return AveragedReport(reports[0].iters, reports[0].column("epoch"), F.mean(axis=0), se, reports)


def _run_star(args):
    return run(*args)


def epoch_iterations(m: int, tau: float, epochs: int) -> int:
    """Iterations matching ``epochs`` passes over the blocks: ceil(m * epochs / tau)."""
    return math.ceil(m * epochs / tau)


@dataclass
class ReferenceSolution:
    x: np.ndarray
    F_star: float
    residual: float
    iterations: int


def reference_solve(problem: CompositeProblem, tol: float = 1e-12, max_iters: int = 100_000, x0=None) -> ReferenceSolution:
    """High-accuracy deterministic forward-backward solve.

    Uses every block each iteration with ``delta = 1`` on the
    full-displacement certificate and stops once the residual in the
    inverse-step metric drops below ``tol``.
    """
    part = problem.partition
    cert = nu_s3(problem.structure, problem.operator_norms)
    gamma = cert.stepsizes(1.0)
    steps = part.expand(gamma)
    blocks = np.arange(part.m)
    coords = part.coords(blocks)
    x = np.zeros(part.n_total) if x0 is None else project_start(problem, x0)
    smooth, prox = problem.smooth, problem.prox
    res = math.inf
    it = 0
    while it < max_iters:
        xbar = prox.prox_selected(blocks, coords, x - steps * smooth.full_gradient(x), steps)
        res = math.sqrt(float(np.dot(1.0 / gamma, part.block_sq_norms(x - xbar))))
        x = xbar
        it += 1
        if res <= tol:
            break
    return ReferenceSolution(x, problem.objective(x), res, it)
