"""Pieces shared by the particle filters: weights, resampling, RNG streams, records."""

from __future__ import annotations

import math
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .errors import ModelEvidenceError


def step_uniforms(seed: int, t: int, n: int, width: int) -> list:
    """Row i holds particle i's uniforms for step t; independent of how particles are scheduled."""
    return np.random.default_rng([seed, t]).random((n, width)).tolist()


def resample_uniform(seed: int, t: int) -> float:
    return float(np.random.default_rng([seed, t, 1]).random())


def pick(probs, u: float) -> int:
    """Index drawn from ``probs`` by inverse CDF; never returns a zero-probability index."""
    acc = 0.0
    last = 0
    for i, p in enumerate(probs):
        if p > 0.0:
            acc += p
            last = i
            if u < acc:
                return i
    return last


def normalize_log_weights(logw: np.ndarray) -> np.ndarray:
    """Normalized weights from log weights (-inf marks a dead particle)."""
    top = np.max(logw)
    if not np.isfinite(top):
        raise ModelEvidenceError("model inconsistent with evidence: every particle has zero weight")
    w = np.exp(logw - top)
    return w / w.sum()


def effective_sample_size(w: np.ndarray) -> float:
    return float(1.0 / np.dot(w, w))


def systematic_resample(w: np.ndarray, u: float) -> np.ndarray:
    """Indices chosen by systematic resampling with a single uniform offset u."""
    n = len(w)
    cum = np.cumsum(w)
    cum[-1] = 1.0
    positions = (u + np.arange(n)) / n
    return np.minimum(np.searchsorted(cum, positions, side="right"), n - 1)


@dataclass(frozen=True)
class PolicyEstimate:
    t: int
    level: int
    kind: str  # "predicted" = Pr(pi_{t+1}^k | o_1..t), "filtered" = Pr(pi_t^k | o_1..t)
    ids: tuple
    probs: tuple
    ess: float
    wall_ns: int | None = None

    @property
    def distribution(self) -> dict:
        return dict(zip(self.ids, self.probs))

    def record(self, timing: bool = False) -> dict:
        return {
            "t": self.t,
            "level": self.level,
            "kind": self.kind,
            "distribution": self.distribution,
            "ess": self.ess,
            "wall_ns": self.wall_ns if timing else None,
        }


@dataclass(frozen=True)
class StepDiagnostics:
    t: int
    ess: float
    dead: int
    resampled: bool
    wall_ns: int
    cpu_ns: int


@dataclass
class RunResult:
    estimates: list
    diagnostics: list
    log_evidence: float = math.nan


def run_chunks(fn, n: int, workers: int):
    """Apply fn(lo, hi) over particle index ranges; results concatenated in index order."""
    if workers <= 1 or n < 2 * workers:
        return fn(0, n)
    size = -(-n // workers)
    bounds = [(lo, min(lo + size, n)) for lo in range(0, n, size)]
    with ThreadPoolExecutor(max_workers=workers) as ex:
        parts = list(ex.map(lambda b: fn(*b), bounds))
    out = []
    for p in parts:
        out.extend(p)
    return out


class Stopwatch:
    def __init__(self):
        self.wall = time.perf_counter_ns()
        self.cpu = time.process_time_ns()

    def read(self):
        return time.perf_counter_ns() - self.wall, time.process_time_ns() - self.cpu


class ParticleFilter:
    """Common SIS loop: resample when ESS drops, advance every live particle, reweight.

    Subclasses provide ``_advance(lo, hi, o, rows)`` returning per-particle
    log-weight increments (None for a particle that died), ``_reindex`` and
    ``_level_estimate``.
    """

    width = 1

    def __init__(self, model, n: int, seed: int, threshold: float = 0.5, workers: int = 1):
        if n < 1:
            raise ValueError("particle count must be positive")
        self.model = model
        self.n = n
        self.seed = int(seed)
        self.threshold = threshold
        self.workers = workers
        self.t = 0
        self.logw = np.zeros(n)
        self.weights = np.full(n, 1.0 / n)
        self.ess = float(n)
        self.log_evidence = 0.0

    def _maybe_resample(self) -> bool:
        if self.ess >= self.threshold * self.n:
            return False
        idx = systematic_resample(self.weights, resample_uniform(self.seed, self.t))
        self._reindex(idx.tolist())
        self.logw = np.zeros(self.n)
        self.weights = np.full(self.n, 1.0 / self.n)
        return True

    def step(self, o: int) -> StepDiagnostics:
        clock = Stopwatch()
        resampled = self._maybe_resample()
        self.t += 1
        rows = step_uniforms(self.seed, self.t, self.n, self.width)
        incs = run_chunks(lambda lo, hi: self._advance(lo, hi, o, rows), self.n, self.workers)
        inc = np.array([-np.inf if x is None else x for x in incs])
        prev = self.weights
        self.logw = self.logw + inc
        self.weights = normalize_log_weights(self.logw)
        with np.errstate(divide="ignore", invalid="ignore"):
            self.log_evidence += float(np.log(np.dot(prev, np.exp(inc))))
        self.ess = effective_sample_size(self.weights)
        wall, cpu = clock.read()
        return StepDiagnostics(self.t, self.ess, int(np.sum(~np.isfinite(self.logw))), resampled, wall, cpu)

    def estimate(self, k: int, kind: str = "predicted") -> PolicyEstimate:
        if not 0 <= k <= self.model.K:
            raise ValueError(f"level {k} outside 0..{self.model.K}")
        probs = self._level_estimate(k, kind)
        return PolicyEstimate(self.t, k, kind, self.model.pids[k], tuple(probs), self.ess)

    def live(self):
        return [i for i, w in enumerate(self.weights.tolist()) if w > 0.0]


def run_filter(filt, observations, query_levels, kinds=("predicted",), every: int = 1) -> RunResult:
    """Drive a filter over an observation sequence, estimating at t=0 and every ``every`` steps."""
    estimates = []
    diagnostics = []

    def emit(wall):
        for k in query_levels:
            for kind in kinds:
                if kind == "filtered" and filt.t == 0:
                    continue
                e = filt.estimate(k, kind)
                estimates.append(PolicyEstimate(e.t, e.level, e.kind, e.ids, e.probs, e.ess, wall))

    emit(0)
    for i, o in enumerate(observations, start=1):
        d = filt.step(o)
        diagnostics.append(d)
        if i % every == 0 or i == len(observations):
            emit(d.wall_ns)
    return RunResult(estimates, diagnostics, filt.log_evidence)
