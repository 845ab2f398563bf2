"""Command line entry point: ``ahmm <command> ...``.

Exit codes: 0 success, 1 usage error, 2 data error, 3 model inconsistent
with the evidence.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys

from .errors import AHMMError, HierarchyError, InputError, ModelEvidenceError, ParseError, ZeroEvidence

log = logging.getLogger("ahmm")

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_EVIDENCE = 0, 1, 2, 3


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _open_out(path):
    return sys.stdout if path in (None, "-") else open(path, "w")


def cmd_validate(args) -> int:
    from .factored import FactoredHierarchy, flatten, validate_factored
    from .hierarchy import validate_hierarchy
    from .serialization import load_hierarchy

    h = load_hierarchy(args.hierarchy, strict=False)
    if isinstance(h, FactoredHierarchy):
        report = validate_factored(h)
        if not report and len(h.components) <= args.flatten_limit:
            report = validate_hierarchy(flatten(h))
    else:
        report = validate_hierarchy(h)
    for v in report:
        print(v)
    print(f"{len(report)} violation(s)")
    return EXIT_OK if not report else EXIT_DATA


def cmd_build(args) -> int:
    from .building import BuildingConfig, build_building_scenario, build_two_room_slice
    from .serialization import save_hierarchy

    if args.two_room:
        sc = build_two_room_slice(args.grid_size, args.level1_bias, args.upper_bias, args.obs_stay_prob)
    else:
        cfg = BuildingConfig(
            grid_size=args.grid_size,
            obs_stay_prob=0.6 if args.obs_stay_prob is None else args.obs_stay_prob,
            slip=args.slip,
            level1_bias=args.level1_bias,
            upper_bias=args.upper_bias,
            initial=args.initial,
        )
        sc = build_building_scenario(cfg)
    save_hierarchy(sc.hierarchy, args.output)
    if args.meta:
        meta = {
            "entrances": {k: list(v) for k, v in sc.entrances.items()},
            "initial": sc.initial,
            "partition": [[sorted(r) for r in level] for level in sc.partition.partitions],
        }
        with open(args.meta, "w") as f:
            json.dump(meta, f, indent=1, sort_keys=True)
    log.info("wrote %s", args.output)
    return EXIT_OK


def cmd_simulate(args) -> int:
    from .serialization import load_hierarchy, write_observations, write_trajectory
    from .simulator import simulate

    h = load_hierarchy(args.hierarchy)
    traj = simulate(h, args.top, args.s0, args.steps, args.seed)
    if args.output in (None, "-"):
        path = "/dev/stdout"
    else:
        path = args.output
    write_trajectory(traj, path)
    if args.observations:
        write_observations(traj, args.observations)
    return EXIT_OK


def cmd_filter(args) -> int:
    from .harness import stream_filter

    levels = None if args.levels is None else [int(x) for x in args.levels.split(",")]
    kinds = ("predicted", "filtered") if args.filtered else ("predicted",)
    src = sys.stdin if args.input in (None, "-") else open(args.input)
    out = _open_out(args.output)
    try:
        if args.kind == "exact":
            _exact_stream(args, src, out, levels)
        else:
            stream_filter(
                args.hierarchy,
                args.kind,
                args.particles,
                args.seed,
                args.s0,
                src,
                out,
                levels=levels,
                strict=args.strict,
                timing=args.timing,
                workers=args.workers,
                kinds=kinds,
            )
    finally:
        if out is not sys.stdout:
            out.close()
    return EXIT_OK


def _exact_stream(args, src, out, levels):
    """Exact filter driven by a trajectory file: the states and termination levels are observed."""
    from .belief_chain import exact_filter_step, init_chain, level_marginal
    from .serialization import load_hierarchy, read_trajectory

    h = load_hierarchy(args.hierarchy)
    model = h.compiled
    levels = [model.K] if levels is None else levels
    traj = read_trajectory(src.name if src is not sys.stdin else "/dev/stdin")
    s0 = args.s0 or traj.s0
    if s0 not in model.sidx:
        raise InputError(f"unknown start state {s0!r}")
    dom = model.applicable[model.K][model.sidx[s0]]
    c = init_chain(model, {p: 1.0 / len(dom) for p in dom}, model.sidx[s0])
    out.write(json.dumps({"header": {"filter": "exact", "s0": s0, "levels": levels}}, sort_keys=True) + "\n")
    for t, st in enumerate(traj.steps, start=1):
        if st.l >= model.K:
            break
        c = exact_filter_step(model, c, model.sidx[st.s], st.l, t, posterior=False).chain
        for k in levels:
            dist = {model.pids[k][p]: v for p, v in zip(c.domains[k + 1], level_marginal(c, k))}
            rec = {"t": t, "level": k, "kind": "predicted", "distribution": dist, "ess": None, "wall_ns": None}
            out.write(json.dumps(rec, sort_keys=True) + "\n")


def cmd_bench(args) -> int:
    from .harness import ExperimentConfig, profile_report, run_experiment

    base = {}
    if args.config:
        with open(args.config) as f:
            base = json.load(f)
    for key in ("scenario", "repeats", "seed", "horizon", "workers", "csv", "trace_csv", "top", "start", "slip"):
        v = getattr(args, key)
        if v is not None:
            base[key] = v
    if args.sizes:
        base["sizes"] = [int(x) for x in args.sizes.split(",")]
    if args.filters:
        base["filters"] = args.filters.split(",")
    cfg = ExperimentConfig.from_dict(base)
    table = run_experiment(cfg)
    for p in table.points:
        print(f"{p.filter}\tN={p.N}\tsigma={p.sigma:.6g}\tT={p.T:.4g}s\teta={p.eta:.4g}\tfailures={p.failures}")
    profile_report(table)
    return EXIT_OK


def cmd_fixtures(args) -> int:
    from .harness import make_fixture

    for name in args.names:
        paths = make_fixture(name, args.out, T=args.steps, seed=args.seed)
        for kind, p in sorted(paths.items()):
            print(f"{name}\t{kind}\t{p}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="ahmm", description="Policy recognition in abstract hidden Markov models.")
    p.add_argument("-v", "--verbose", action="count", default=0)
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    v = sub.add_parser("validate", help="check a hierarchy file")
    v.add_argument("hierarchy")
    v.add_argument("--flatten-limit", type=int, default=4, help="max components to flatten for policy checks")
    v.set_defaults(func=cmd_validate)

    b = sub.add_parser("build-scenario", help="write the building hierarchy")
    b.add_argument("-o", "--output", required=True)
    b.add_argument("--meta", help="also write entrances, initial distribution and partition as JSON")
    b.add_argument("--grid-size", type=int, default=5)
    b.add_argument("--obs-stay-prob", type=float, default=None)
    b.add_argument("--slip", type=float, default=0.0)
    b.add_argument("--level1-bias", type=float, default=0.7)
    b.add_argument("--upper-bias", type=float, default=0.8)
    b.add_argument("--initial", choices=("entrances", "uniform"), default="entrances")
    b.add_argument("--two-room", action="store_true", help="the two-room K=2 slice instead of the full building")
    b.set_defaults(func=cmd_build)

    s = sub.add_parser("simulate", help="run a top-level policy and record the trajectory")
    s.add_argument("hierarchy")
    s.add_argument("--top", required=True)
    s.add_argument("--s0", required=True)
    s.add_argument("--steps", type=int, default=100)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("-o", "--output")
    s.add_argument("--observations", help="also write 't o' lines here")
    s.set_defaults(func=cmd_simulate)

    f = sub.add_parser("filter", help="stream observations through a filter")
    f.add_argument("hierarchy")
    f.add_argument("--kind", choices=("rb_sis", "sis", "exact"), default="rb_sis")
    f.add_argument("-n", "--particles", type=int, default=1000)
    f.add_argument("--seed", type=int, default=0)
    f.add_argument("--s0", help="start state (exact: defaults to the trajectory's)")
    f.add_argument("--levels", help="comma-separated levels (default: top)")
    f.add_argument("-i", "--input", help="observation file (exact: trajectory file); default stdin")
    f.add_argument("-o", "--output")
    f.add_argument("--strict", action="store_true", help="abort on malformed input lines")
    f.add_argument("--timing", action="store_true", help="fill wall_ns (makes output run-dependent)")
    f.add_argument("--filtered", action="store_true", help="also emit Pr(pi_t | o_1..t)")
    f.add_argument("--workers", type=int, default=1)
    f.set_defaults(func=cmd_filter)

    e = sub.add_parser("bench", help="sigma(N), T(N) and eta profiles")
    e.add_argument("--config", help="JSON experiment config")
    e.add_argument("--scenario")
    e.add_argument("--filters")
    e.add_argument("--sizes")
    e.add_argument("--repeats", type=int)
    e.add_argument("--seed", type=int)
    e.add_argument("--horizon", type=int)
    e.add_argument("--top")
    e.add_argument("--start")
    e.add_argument("--slip", type=float)
    e.add_argument("--workers", type=int)
    e.add_argument("--csv")
    e.add_argument("--trace-csv", dest="trace_csv")
    e.set_defaults(func=cmd_bench)

    x = sub.add_parser("fixtures", help="write oracle fixtures")
    x.add_argument("names", nargs="+", choices=("t4", "two-room"))
    x.add_argument("--out", required=True)
    x.add_argument("--steps", type=int, default=6)
    x.add_argument("--seed", type=int, default=7)
    x.set_defaults(func=cmd_fixtures)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(
        level=logging.WARNING - 10 * min(args.verbose, 2),
        format="%(levelname)s %(name)s: %(message)s",
        stream=sys.stderr,
    )
    if getattr(args, "workers", None) == 0:
        args.workers = os.cpu_count() or 1
    try:
        return args.func(args)
    except BrokenPipeError:
        # downstream reader closed early (e.g. piped into head)
        os.dup2(os.open(os.devnull, os.O_WRONLY), sys.stdout.fileno())
        return EXIT_OK
    except ModelEvidenceError as e:
        log.error("%s", e)
        return EXIT_EVIDENCE
    except (ParseError, InputError, HierarchyError, ZeroEvidence, AHMMError, OSError, ValueError) as e:
        log.error("%s", e)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
