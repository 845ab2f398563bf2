"""Experiment runner, streaming filter and fixture generation.

An experiment runs each filter R times per sample size on one frozen
observation stream and records the spread of the final estimate of the true
top-level policy, the per-step CPU time and eta = sigma^2 * T.
"""

from __future__ import annotations

import csv
import json
import logging
import math
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

import numpy as np

from .belief_chain import exact_filter_step, init_chain, level_marginal
from .building import BuildingConfig, build_building_scenario, build_two_room_slice
from .errors import InputError, ModelEvidenceError, ParseError
from .fixtures import t4
from .particles import RunResult, run_filter
from .rb_sis import RBSISFilter
from .serialization import (
    load_hierarchy,
    parse_observation_line,
    save_hierarchy,
    write_observations,
    write_trajectory,
)
from .simulator import simulate
from .sis_baseline import SISFilter

log = logging.getLogger(__name__)

FILTERS = ("exact", "rb_sis", "sis")


@dataclass(frozen=True)
class ExperimentConfig:
    scenario: str = "building"  # building | t4
    filters: tuple = ("rb_sis", "sis")
    sizes: tuple = (100, 300, 1000, 3000, 10000)
    repeats: int = 50
    seed: int = 0
    level: int | None = None  # defaults to the top level
    obs_stay_prob: float = 0.6
    slip: float = 0.2
    noiseless: bool = False
    top: str = "exit-E"
    start: str = "N"  # entrance the agent starts from
    trajectory_seed: int = 2
    horizon: int = 10
    workers: int = 1  # concurrent (filter, N) cells
    csv: str | None = None
    trace_csv: str | None = None

    def __post_init__(self):
        if self.repeats < 2:
            raise InputError("repeats must be at least 2 to estimate a spread")
        if not self.sizes or any(int(n) < 1 for n in self.sizes):
            raise InputError("sample sizes must be positive")
        bad = [f for f in self.filters if f not in FILTERS]
        if bad:
            raise InputError(f"unknown filter kind(s) {bad}; choose from {FILTERS}")
        if self.horizon < 1:
            raise InputError("horizon must be positive")

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentConfig":
        known = {f.name for f in fields(cls)}
        extra = set(d) - known
        if extra:
            raise InputError(f"unknown config keys {sorted(extra)}")
        d = dict(d)
        for key in ("filters", "sizes"):
            if key in d:
                d[key] = tuple(d[key])
        return cls(**d)


@dataclass(frozen=True)
class Scenario:
    model: object
    s0: int
    observations: tuple  # symbol indices
    states: tuple  # true (s, l) per step, for the exact filter
    truth: int  # index of the true top-level policy
    partition: object = None


@dataclass(frozen=True)
class ProfilePoint:
    filter: str
    N: int
    runs: int
    failures: int
    mean: float
    sigma: float
    T: float  # mean CPU seconds per step
    eta: float
    c: float  # sigma * sqrt(N)


@dataclass
class ProfileTable:
    config: ExperimentConfig
    points: list = field(default_factory=list)
    fits: dict = field(default_factory=dict)

    def by_filter(self, kind: str) -> list:
        return [p for p in self.points if p.filter == kind]


def make_scenario(cfg: ExperimentConfig) -> Scenario:
    """Build the model and freeze one observation stream of ``cfg.horizon`` steps."""
    if cfg.scenario == "building":
        bc = BuildingConfig(obs_stay_prob=1.0 if cfg.noiseless else cfg.obs_stay_prob, slip=cfg.slip)
        sc = build_building_scenario(bc)
        h, partition = sc.hierarchy, sc.partition
        if cfg.start not in sc.entrances:
            raise InputError(f"unknown entrance {cfg.start!r}")
        s0 = sc.entrances[cfg.start][1]
    elif cfg.scenario == "t4":
        h, partition, s0 = t4(noisy=not cfg.noiseless), None, "1"
    else:
        raise InputError(f"unknown scenario {cfg.scenario!r}")
    model = h.compiled
    if cfg.top not in model.pidx[model.K]:
        raise InputError(f"unknown top-level policy {cfg.top!r}")
    traj = simulate(h, cfg.top, s0, cfg.horizon + 1, cfg.trajectory_seed)
    steps = [st for st in traj.steps if st.l < model.K][: cfg.horizon]
    return Scenario(
        model=model,
        s0=model.sidx[s0],
        observations=tuple(model.oidx[st.o] for st in steps),
        states=tuple((model.sidx[st.s], st.l) for st in steps),
        truth=model.pidx[model.K][cfg.top],
        partition=partition,
    )


def make_filter(kind: str, model, n: int, seed: int, s0: int, workers: int = 1, top_prior=None):
    if kind == "rb_sis":
        return RBSISFilter(model, n, seed, s0, top_prior, workers=workers)
    if kind == "sis":
        return SISFilter(model, n, seed, s0, top_prior, workers=workers)
    raise InputError(f"unknown particle filter {kind!r}")


def exact_run(model, s0: int, states, level: int, top_prior=None):
    """Exact filter over observed (s, l) pairs; returns the final level marginal by policy index."""
    if top_prior is None:
        dom = model.applicable[model.K][s0]
        top_prior = {p: 1.0 / len(dom) for p in dom}
    c = init_chain(model, top_prior, s0)
    for t, (s, l) in enumerate(states, start=1):
        c = exact_filter_step(model, c, s, l, t, posterior=False).chain
    out = [0.0] * len(model.pids[level])
    for p, v in zip(c.domains[level + 1], level_marginal(c, level)):
        out[p] = v
    return out


def _run_cell(args):
    """All repeats of one (filter, N) cell. Returns (values, cpu seconds per step, failures, traces)."""
    cfg, kind, n = args
    sc = make_scenario(cfg)
    level = sc.model.K if cfg.level is None else cfg.level
    vals, times, traces = [], [], []
    failures = 0
    for r in range(cfg.repeats):
        seed = cfg.seed + r
        if kind == "exact":
            vals.append(exact_run(sc.model, sc.s0, sc.states, level)[sc.truth])
            continue
        filt = make_filter(kind, sc.model, n, seed, sc.s0)
        every = 1 if cfg.trace_csv else len(sc.observations)
        try:
            res = run_filter(filt, sc.observations, [level], every=every)
        except ModelEvidenceError:
            failures += 1
            continue
        vals.append(res.estimates[-1].probs[sc.truth])
        cpu = [d.cpu_ns for d in res.diagnostics[1:]] or [d.cpu_ns for d in res.diagnostics]
        times.append(float(np.mean(cpu)) * 1e-9)
        if cfg.trace_csv:
            traces.extend((kind, n, seed, e.t, e.probs[sc.truth]) for e in res.estimates)
    return vals, times, failures, traces


def loglog_fit(x, y):
    """Least squares log y = a + b log x; returns (b, exp(a), R^2)."""
    lx, ly = np.log(np.asarray(x, float)), np.log(np.asarray(y, float))
    b, a = np.polyfit(lx, ly, 1)
    return float(b), float(math.exp(a)), r_squared(ly, a + b * lx)


def linear_fit(x, y):
    """Least squares y = a + b x; returns (b, a, R^2)."""
    x, y = np.asarray(x, float), np.asarray(y, float)
    b, a = np.polyfit(x, y, 1)
    return float(b), float(a), r_squared(y, a + b * x)


def r_squared(y, fit) -> float:
    y = np.asarray(y, float)
    ss = float(np.sum((y - np.mean(y)) ** 2))
    return 1.0 - float(np.sum((y - fit) ** 2)) / ss if ss > 0 else 1.0


def run_experiment(cfg: ExperimentConfig) -> ProfileTable:
    """One ProfilePoint per (filter, N); fits per filter; CSV output if configured."""
    cells = [(cfg, kind, int(n)) for kind in cfg.filters for n in cfg.sizes]
    if cfg.workers > 1:
        with ProcessPoolExecutor(max_workers=cfg.workers) as ex:
            results = list(ex.map(_run_cell, cells))
    else:
        results = [_run_cell(c) for c in cells]
    table = ProfileTable(cfg)
    traces = []
    for (_, kind, n), (vals, times, failures, tr) in zip(cells, results):
        traces.extend(tr)
        if len(vals) >= 2:
            sigma = float(np.std(vals, ddof=1))
            mean = float(np.mean(vals))
        else:
            sigma = mean = math.nan
        T = float(np.mean(times)) if times else 0.0
        table.points.append(ProfilePoint(kind, n, len(vals), failures, mean, sigma, T, sigma**2 * T, sigma * math.sqrt(n)))
        log.info("%s N=%d sigma=%.5g T=%.3gs eta=%.3g failures=%d", kind, n, sigma, T, sigma**2 * T, failures)
    for kind in cfg.filters:
        table.fits[kind] = profile_fits(table.by_filter(kind))
    if cfg.csv:
        write_profile_csv(table, cfg.csv)
    if cfg.trace_csv:
        with open(cfg.trace_csv, "w", newline="") as f:
            w = csv.writer(f)
            w.writerow(["filter", "N", "seed", "t", "p_true"])
            w.writerows(traces)
    return table


def profile_fits(points) -> dict:
    """sigma(N) = c N^b and T(N) = a + b N fits; eta spread is max/min over N."""
    ok = [p for p in points if p.sigma > 0 and math.isfinite(p.sigma)]
    out = {"exponent": math.nan, "c": math.nan, "r2": math.nan, "c_half": math.nan}
    if len(ok) >= 2:
        b, c, r2 = loglog_fit([p.N for p in ok], [p.sigma for p in ok])
        out.update(exponent=b, c=c, r2=r2)
        out["c_half"] = float(np.exp(np.mean([math.log(p.c) for p in ok])))
        etas = [p.eta for p in ok]
        out["eta_mean"] = float(np.mean(etas))
        out["eta_spread"] = max(etas) / min(etas) if min(etas) > 0 else math.inf
    timed = [p for p in points if p.T > 0]
    if len(timed) >= 2:
        slope, icept, r2 = linear_fit([p.N for p in timed], [p.T for p in timed])
        out.update(t_slope=slope, t_intercept=icept, t_r2=r2)
    return out


def write_profile_csv(table: ProfileTable, path) -> None:
    with open(path, "w", newline="") as f:
        w = csv.writer(f)
        w.writerow([x.name for x in fields(ProfilePoint)])
        for p in table.points:
            w.writerow([getattr(p, x.name) for x in fields(ProfilePoint)])


# streaming


def format_record(e, timing: bool = False) -> str:
    return json.dumps(e.record(timing), sort_keys=True)


def stream_filter(
    hierarchy_path,
    kind: str,
    n: int,
    seed: int,
    s0: str,
    instream,
    outstream,
    levels=None,
    strict: bool = False,
    timing: bool = False,
    workers: int = 1,
    kinds=("predicted",),
):
    """Filter observations read line by line, writing one record per step per level.

    The first output line is a header record. Only the current particle set
    is held, so memory does not grow with the stream. Malformed lines are
    skipped with a warning, or raise ParseError when ``strict``.
    """
    from .factored import FactoredHierarchy, FactoredRBSISFilter

    h = load_hierarchy(hierarchy_path)
    model = h.compiled
    levels = [model.K] if levels is None else list(levels)
    for k in levels:
        if not 0 <= k <= model.K:
            raise InputError(f"level {k} outside 0..{model.K}")
    if isinstance(h, FactoredHierarchy):
        if kind != "rb_sis":
            raise InputError("factored hierarchies support the rb_sis filter only")
        filt = FactoredRBSISFilter(model, n, seed, model.state_key(s0), workers=workers)
        obs_of = model.obs_key
    else:
        if s0 not in model.sidx:
            raise InputError(f"unknown start state {s0!r}")
        filt = make_filter(kind, model, n, seed, model.sidx[s0], workers)

        def obs_of(o):
            if o not in model.oidx:
                raise ParseError(f"unknown observation symbol {o!r}")
            return model.oidx[o]

    header = {"filter": kind, "N": n, "seed": seed, "s0": s0, "levels": levels, "kinds": list(kinds)}
    outstream.write(json.dumps({"header": header}, sort_keys=True) + "\n")
    outstream.flush()
    for lineno, line in enumerate(instream, start=1):
        try:
            sym = parse_observation_line(line)
            if sym is None:
                continue
            o = obs_of(sym)
        except (ParseError, InputError) as e:
            if strict:
                raise ParseError(f"line {lineno}: {e}") from None
            log.warning("line %d skipped: %s", lineno, e)
            continue
        d = filt.step(o)
        for k in levels:
            for kd in kinds:
                e = filt.estimate(k, kd)
                if timing:
                    e = type(e)(e.t, e.level, e.kind, e.ids, e.probs, e.ess, d.wall_ns)
                outstream.write(format_record(e, timing) + "\n")
        outstream.flush()
    return filt


def run_records(result: RunResult, timing: bool = False) -> list[str]:
    """Records of a run_filter result in the streaming format (t = 0 priors omitted)."""
    return [format_record(e, timing) for e in result.estimates if e.t > 0]


# fixtures


def _oracle_table(model, top_prior, s0, traj_states, observations):
    from .oracle import conditioned_marginals, observation_posteriors, walk

    T = len(traj_states)
    total = sum(n.prob for n in walk(model, top_prior, s0, T) if n.t == T or n.stack is None)
    cond = conditioned_marginals(model, top_prior, s0, T)
    per_step = []
    for t in range(1, T + 1):
        entry = cond.get(tuple(traj_states[:t]))
        if entry is None:
            break
        per_step.append(
            {
                "t": t,
                "filtered": [{model.pids[k][p]: v for p, v in sorted(d.items())} for k, d in enumerate(entry["filtered"])],
                "predicted": [{model.pids[k][p]: v for p, v in sorted(d.items())} for k, d in enumerate(entry["predicted"])],
            }
        )
    obs_post = []
    if observations is not None:
        for t, e in enumerate(observation_posteriors(model, top_prior, s0, observations), start=1):
            obs_post.append(
                {
                    "t": t,
                    "evidence": e["evidence"],
                    "predicted": [{model.pids[k][p]: v for p, v in sorted(d.items())} for k, d in enumerate(e["predicted"])],
                }
            )
    return {"total_probability": total, "conditioned": per_step, "observation_posteriors": obs_post}


def make_fixture(name: str, outdir, T: int = 6, seed: int = 7) -> dict:
    """Write hierarchy, frozen trajectory, observations and oracle tables; returns the paths."""
    out = Path(outdir)
    out.mkdir(parents=True, exist_ok=True)
    if name == "t4":
        h = t4()
        top, s0 = "A", "1"
    elif name == "two-room":
        h = build_two_room_slice().hierarchy
        top, s0 = "leave-E", build_two_room_slice().entrances["W"][1]
    else:
        raise InputError(f"unknown fixture {name!r}; choose t4 or two-room")
    model = h.compiled
    traj = simulate(h, top, s0, T, seed)
    dom = model.applicable[model.K][model.sidx[s0]]
    prior = {p: 1.0 / len(dom) for p in dom}
    states = [(model.sidx[st.s], st.l) for st in traj.steps if st.l < model.K]
    obs = [model.oidx[st.o] for st in traj.steps if st.l < model.K]
    oracle = _oracle_table(model, prior, model.sidx[s0], states, obs)
    oracle.update(top=top, s0=s0, T=T, seed=seed)
    paths = {
        "hierarchy": out / f"{name}.json",
        "trajectory": out / f"{name}-trajectory.tsv",
        "observations": out / f"{name}-observations.tsv",
        "oracle": out / f"{name}-oracle.json",
    }
    save_hierarchy(h, paths["hierarchy"])
    write_trajectory(traj, paths["trajectory"])
    write_observations(traj, paths["observations"])
    paths["oracle"].write_text(json.dumps(oracle, indent=1, sort_keys=True) + "\n")
    return {k: str(v) for k, v in paths.items()}


def profile_report(table: ProfileTable, stream=None) -> None:
    stream = sys.stdout if stream is None else stream
    for kind, fit in table.fits.items():
        stream.write(
            f"{kind}: sigma ~ {fit.get('c', math.nan):.4g} N^{fit.get('exponent', math.nan):.3f} "
            f"(R2 {fit.get('r2', math.nan):.3f}), c(1/2) {fit.get('c_half', math.nan):.4g}, "
            f"eta {fit.get('eta_mean', math.nan):.3g} (spread {fit.get('eta_spread', math.nan):.2f}), "
            f"T(N) R2 {fit.get('t_r2', math.nan):.3f}\n"
        )


def config_dict(cfg: ExperimentConfig) -> dict:
    d = asdict(cfg)
    d["filters"], d["sizes"] = list(cfg.filters), list(cfg.sizes)
    return d
