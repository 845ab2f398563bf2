"""JSON hierarchy files, trajectory files and observation streams.

Hierarchy document::

    {
      "format": "ahmm-hierarchy/1",
      "states": [{"id": "s", "neighbours": ["t", ...]}, ...],
      "actions": {"ids": ["a", ...], "transition": {"a": {"s": {"t": p}}}},
      "observation": {"symbols": ["o", ...], "likelihood": {"s": {"o": p}}},
      "levels": [
        {"policies": [{"id": "a"}, ...]},                       # level 0: the actions
        {"policies": [{"id": "pi", "applicable": [...],
                       "beta": {"d": p}, "select": {"s": {"child": p}}}]},
        ...
      ]
    }

Probabilities may be numbers or decimal strings. A factored hierarchy adds
``state_components`` (one entry per component with its own values,
neighbours, per-action transition and sensor) and keys policy tables by
joint ids ``"v1|v2|..."``; it has no ``states`` section.
"""

from __future__ import annotations

import json
import logging
import math
from pathlib import Path

from .errors import ParseError
from .hierarchy import TOL, ActionModel, ObservationModel, PolicyHierarchy, PolicySpec, StateSpace

log = logging.getLogger(__name__)

FORMAT = "ahmm-hierarchy/1"
FACTORED_FORMAT = "ahmm-factored/1"
RENORMALIZE_BELOW = 1e-6


def _prob(v, where: str) -> float:
    try:
        p = float(v)
    except (TypeError, ValueError):
        raise ParseError(f"{where}: not a probability: {v!r}") from None
    if not (math.isfinite(p) and 0.0 <= p <= 1.0):
        raise ParseError(f"{where}: probability out of range: {v!r}")
    return p


def _dist(obj, where: str, legal=None, legal_what="id", strict=True) -> dict:
    """Parse {key: prob}; checks keys against ``legal`` and fixes float dust in the total."""
    if not isinstance(obj, dict):
        raise ParseError(f"{where}: expected an object")
    out = {}
    for key, v in obj.items():
        if legal is not None and key not in legal:
            raise ParseError(f"{where}: unknown {legal_what} {key!r}")
        out[key] = _prob(v, f"{where}[{key!r}]")
    dev = abs(sum(out.values()) - 1.0)
    if TOL < dev < RENORMALIZE_BELOW:
        z = sum(out.values())
        out = {k: v / z for k, v in out.items()}
    elif dev >= RENORMALIZE_BELOW and strict:
        raise ParseError(f"{where}: distribution not normalized (sum={sum(out.values())!r})")
    return out


def _need(obj, key, where, kind=dict):
    if not isinstance(obj, dict) or key not in obj:
        raise ParseError(f"{where}: missing section {key!r}")
    v = obj[key]
    if not isinstance(v, kind):
        raise ParseError(f"{where}.{key}: expected {kind.__name__}")
    return v


def _read_json(path) -> dict:
    text = Path(path).read_text()
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as e:
        raise ParseError(f"{path}: line {e.lineno} column {e.colno}: {e.msg}") from None
    if not isinstance(doc, dict):
        raise ParseError(f"{path}: top level must be an object")
    return doc


def _levels(doc, states: set, actions: tuple, key=lambda s: s, strict=True) -> tuple:
    """Policy levels 1..K parsed against the state ids; level 0 is rebuilt by the caller."""
    raw = _need(doc, "levels", "document", list)
    if not raw:
        raise ParseError("levels: need at least level 0")
    lvl0 = [p.get("id") for p in _need(raw[0], "policies", "levels[0]", list)]
    if lvl0 != list(actions):
        raise ParseError(f"levels[0]: policies must list the actions in order {list(actions)}")
    out = []
    prev_ids = set(actions)
    for k in range(1, len(raw)):
        where = f"levels[{k}]"
        pols = []
        seen = set()
        for n, p in enumerate(_need(raw[k], "policies", where, list)):
            w = f"{where}.policies[{n}]"
            pid = p.get("id")
            if not isinstance(pid, str):
                raise ParseError(f"{w}: policy id must be a string")
            if pid in seen:
                raise ParseError(f"{w}: duplicate policy id {pid!r}")
            seen.add(pid)
            w = f"{w} ({pid})"
            app = []
            for s in _need(p, "applicable", w, list):
                if s not in states:
                    raise ParseError(f"{w}.applicable: unknown state {s!r}")
                app.append(key(s))
            beta = {}
            for s, v in p.get("beta", {}).items():
                if s not in states:
                    raise ParseError(f"{w}.beta: unknown state {s!r}")
                beta[key(s)] = _prob(v, f"{w}.beta[{s!r}]")
            sel = {}
            for s, d in p.get("select", {}).items():
                if s not in states:
                    raise ParseError(f"{w}.select: unknown state {s!r}")
                sel[key(s)] = _dist(d, f"{w}.select[{s!r}]", prev_ids, f"level-{k - 1} policy", strict)
            pols.append(PolicySpec(pid, k, frozenset(app), beta, sel))
        out.append(tuple(pols))
        prev_ids = seen
    return tuple(out)


def hierarchy_from_dict(doc: dict, strict: bool = True) -> PolicyHierarchy:
    """Build a hierarchy from a parsed document. ``strict=False`` keeps unnormalized rows for validation."""
    if doc.get("format", FORMAT) != FORMAT:
        raise ParseError(f"unsupported format {doc.get('format')!r}")
    states_raw = _need(doc, "states", "document", list)
    states = []
    nbrs = {}
    for n, e in enumerate(states_raw):
        if not isinstance(e, dict) or not isinstance(e.get("id"), str):
            raise ParseError(f"states[{n}]: expected {{'id': ..., 'neighbours': [...]}}")
        states.append(e["id"])
    known = set(states)
    if len(known) != len(states):
        raise ParseError("states: duplicate state id")
    for n, e in enumerate(states_raw):
        for x in e.get("neighbours", []):
            if x not in known:
                raise ParseError(f"states[{n}] ({e['id']}).neighbours: unknown state {x!r}")
        nbrs[e["id"]] = frozenset(e.get("neighbours", []))

    act = _need(doc, "actions", "document")
    ids = tuple(_need(act, "ids", "actions", list))
    trans = {}
    for a, per in _need(act, "transition", "actions").items():
        if a not in ids:
            raise ParseError(f"actions.transition: unknown action {a!r}")
        trans[a] = {}
        for s, d in per.items():
            if s not in known:
                raise ParseError(f"actions.transition[{a!r}]: unknown state {s!r}")
            trans[a][s] = _dist(d, f"actions.transition[{a!r}][{s!r}]", known, "state", strict)

    obs = _need(doc, "observation", "document")
    symbols = tuple(_need(obs, "symbols", "observation", list))
    like = {}
    for s, d in _need(obs, "likelihood", "observation").items():
        if s not in known:
            raise ParseError(f"observation.likelihood: unknown state {s!r}")
        like[s] = _dist(d, f"observation.likelihood[{s!r}]", set(symbols), "symbol", strict)

    upper = _levels(doc, known, ids, strict=strict)
    am = ActionModel(ids, trans)
    from .hierarchy import action_policies

    return PolicyHierarchy(StateSpace(tuple(states), nbrs), am, ObservationModel(symbols, like), (action_policies(am),) + upper)


def _policy_dict(p: PolicySpec, name=lambda s: s) -> dict:
    return {
        "id": p.id,
        "applicable": sorted(name(s) for s in p.applicable),
        "beta": {name(s): b for s, b in sorted(p.stop_prob.items())},
        "select": {name(s): dict(d) for s, d in sorted(p.select.items())},
    }


def hierarchy_to_dict(h: PolicyHierarchy) -> dict:
    st = h.state_space
    return {
        "format": FORMAT,
        "states": [{"id": s, "neighbours": sorted(st.neighbours.get(s, ()))} for s in st.states],
        "actions": {
            "ids": list(h.action_model.actions),
            "transition": {a: {s: dict(d) for s, d in per.items()} for a, per in h.action_model.transition.items()},
        },
        "observation": {
            "symbols": list(h.observation_model.symbols),
            "likelihood": {s: dict(d) for s, d in h.observation_model.likelihood.items()},
        },
        "levels": [{"policies": [{"id": a} for a in h.action_model.actions]}]
        + [{"policies": [_policy_dict(p) for p in lvl]} for lvl in h.levels[1:]],
    }


def save_hierarchy(h, path) -> None:
    from .factored import FactoredHierarchy

    doc = factored_to_dict(h) if isinstance(h, FactoredHierarchy) else hierarchy_to_dict(h)
    Path(path).write_text(json.dumps(doc, indent=1) + "\n")


def load_hierarchy(path, strict: bool = True):
    """Load a flat or factored hierarchy file (chosen by its ``format`` field)."""
    doc = _read_json(path)
    if doc.get("format") == FACTORED_FORMAT:
        return factored_from_dict(doc, strict)
    return hierarchy_from_dict(doc, strict)


def factored_to_dict(fh) -> dict:
    from .factored import joint_id

    comps = []
    for c in fh.components:
        comps.append(
            {
                "name": c.name,
                "values": list(c.values),
                "neighbours": {v: sorted(c.neighbours.get(v, ())) for v in c.values},
                "transition": {a: {v: dict(d) for v, d in per.items()} for a, per in c.transition.items()},
                "symbols": list(c.symbols),
                "likelihood": {v: dict(d) for v, d in c.likelihood.items()},
            }
        )
    return {
        "format": FACTORED_FORMAT,
        "state_components": comps,
        "actions": {"ids": list(fh.actions)},
        "levels": [{"policies": [{"id": a} for a in fh.actions]}]
        + [{"policies": [_policy_dict(p, joint_id) for p in lvl]} for lvl in fh.levels[1:]],
    }


def factored_from_dict(doc: dict, strict: bool = True):
    from itertools import product

    from .factored import Component, FactoredHierarchy, joint_id, split_id

    ids = tuple(_need(_need(doc, "actions", "document"), "ids", "actions", list))
    comps = []
    for n, e in enumerate(_need(doc, "state_components", "document", list)):
        w = f"state_components[{n}]"
        vals = tuple(_need(e, "values", w, list))
        known = set(vals)
        nb = {}
        for v, xs in e.get("neighbours", {}).items():
            bad = [x for x in [v, *xs] if x not in known]
            if bad:
                raise ParseError(f"{w}.neighbours: unknown value {bad[0]!r}")
            nb[v] = frozenset(xs)
        trans = {}
        for a, per in _need(e, "transition", w).items():
            if a not in ids:
                raise ParseError(f"{w}.transition: unknown action {a!r}")
            trans[a] = {}
            for v, d in per.items():
                if v not in known:
                    raise ParseError(f"{w}.transition[{a!r}]: unknown value {v!r}")
                trans[a][v] = _dist(d, f"{w}.transition[{a!r}][{v!r}]", known, "value", strict)
        symbols = tuple(_need(e, "symbols", w, list))
        like = {}
        for v, d in _need(e, "likelihood", w).items():
            if v not in known:
                raise ParseError(f"{w}.likelihood: unknown value {v!r}")
            like[v] = _dist(d, f"{w}.likelihood[{v!r}]", set(symbols), "symbol", strict)
        comps.append(Component(e.get("name", f"c{n}"), vals, nb, trans, symbols, like))
    joint = {joint_id(x) for x in product(*(c.values for c in comps))}
    upper = _levels(doc, joint, ids, key=split_id, strict=strict)
    lvl0 = tuple(PolicySpec(a, 0, frozenset(split_id(s) for s in joint)) for a in ids)
    return FactoredHierarchy(tuple(comps), ids, (lvl0,) + upper)


# trajectories and observation streams


def write_trajectory(traj, path) -> None:
    """Tab-separated ``t s o l pi_0 .. pi_K`` lines after a ``#`` header with top, seed and s0."""
    with open(path, "w") as f:
        f.write(f"# top={traj.top} seed={traj.seed} s0={traj.s0} done={str(traj.done).lower()}\n")
        for t, st in enumerate(traj.steps, start=1):
            f.write("\t".join([str(t), st.s, st.o, str(st.l), *st.policies]) + "\n")


def read_trajectory(path):
    from .simulator import Trajectory, TrajectoryStep

    header = {}
    steps = []
    with open(path) as f:
        for n, line in enumerate(f, start=1):
            line = line.rstrip("\n")
            if line.startswith("#"):
                header.update(kv.split("=", 1) for kv in line[1:].split() if "=" in kv)
                continue
            if not line.strip():
                continue
            parts = line.split("\t")
            if len(parts) < 5:
                raise ParseError(f"{path}: line {n}: expected t, s, o, l and policies")
            try:
                l = int(parts[3])
            except ValueError:
                raise ParseError(f"{path}: line {n}: bad level {parts[3]!r}") from None
            steps.append(TrajectoryStep(s=parts[1], o=parts[2], policies=tuple(parts[4:]), l=l))
    seed = header.get("seed")
    return Trajectory(
        top=header.get("top", ""),
        seed=None if seed in (None, "None") else int(seed),
        s0=header.get("s0", ""),
        steps=tuple(steps),
        done=header.get("done") == "true",
    )


def write_observations(traj, path) -> None:
    with open(path, "w") as f:
        for t, st in enumerate(traj.steps, start=1):
            f.write(f"{t}\t{st.o}\n")


def parse_observation_line(line: str):
    """Symbol from a ``t<TAB>o`` or bare ``o`` line; None for blank and comment lines."""
    line = line.strip()
    if not line or line.startswith("#"):
        return None
    parts = line.split()
    if len(parts) == 1:
        return parts[0]
    if len(parts) == 2:
        try:
            int(parts[0])
        except ValueError:
            raise ParseError(f"bad time index {parts[0]!r}") from None
        return parts[1]
    raise ParseError(f"expected 't o' or 'o', got {line!r}")


def read_observations(path) -> list:
    out = []
    with open(path) as f:
        for n, line in enumerate(f, start=1):
            try:
                o = parse_observation_line(line)
            except ParseError as e:
                raise ParseError(f"{path}: line {n}: {e}") from None
            if o is not None:
                out.append(o)
    return out
