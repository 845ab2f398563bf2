"""Generative execution of a policy hierarchy."""

from __future__ import annotations

from bisect import bisect_right
from dataclasses import dataclass, field

import numpy as np

from .errors import HierarchyError, InputError


def draw(keys, cum, u):
    """Inverse-CDF draw from (keys, cumulative weights) with a uniform u in [0, 1)."""
    i = bisect_right(cum, u * cum[-1])
    return keys[i if i < len(keys) else len(keys) - 1]


@dataclass
class ExecState:
    t: int
    stack: list  # policy index per level, 0..K
    state: int
    done: bool = False


@dataclass(frozen=True)
class TrajectoryStep:
    s: str
    o: str
    policies: tuple  # ids for levels 0..K of the policies that produced s
    l: int


@dataclass(frozen=True)
class Trajectory:
    top: str
    seed: int | None
    s0: str
    steps: tuple = field(default_factory=tuple)
    done: bool = False


def _rng(seed):
    return seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)


def _select(model, k, parent, s, u):
    entry = model.select_cum[k][parent].get(s)
    if entry is None or not entry[0]:
        raise HierarchyError(
            f"policy {model.pids[k][parent]!r} has no applicable child at state {model.states[s]!r}"
        )
    return draw(entry[0], entry[1], u)


def init_episode(h, top_policy_id: str, s0: str, rng_seed=None) -> ExecState:
    """Place the top policy at s0 and select every level below it."""
    model = h.compiled
    K = model.K
    try:
        top = model.pidx[K][top_policy_id]
    except KeyError:
        raise InputError(f"unknown top-level policy {top_policy_id!r}") from None
    if s0 not in model.sidx:
        raise InputError(f"unknown state {s0!r}")
    s = model.sidx[s0]
    if top not in model.applicable[K][s]:
        raise InputError(f"policy {top_policy_id!r} is not applicable at {s0!r}")
    rng = _rng(rng_seed)
    stack = [0] * (K + 1)
    stack[K] = top
    for k in range(K - 1, -1, -1):
        stack[k] = _select(model, k + 1, stack[k + 1], s, rng.random())
    return ExecState(t=0, stack=stack, state=s)


def cascade_level(model, stack, s, uniforms) -> int:
    """Highest terminating level given arrival state s; one uniform per level 1..K."""
    for k in range(1, model.K + 1):
        beta = model.beta[k][stack[k]].get(s)
        if beta is None or not uniforms[k - 1] < beta:
            return k - 1
    return model.K


def step(h, es: ExecState, rng, trace: list | None = None) -> TrajectoryStep:
    """Advance one time step: move, terminate bottom-up, re-select, observe.

    If ``trace`` is given, (kind, level, context, outcome) tuples are appended
    for every selection and termination event, for frequency tests.
    """
    if es.done:
        raise InputError("episode already finished")
    model = h.compiled
    K = model.K
    stack = es.stack
    a = stack[0]
    cum = model.trans_cum[a][es.state]
    if cum is None:
        raise HierarchyError(f"action {model.pids[0][a]!r} not applicable at {model.states[es.state]!r}")
    s = draw(cum[0], cum[1], rng.random())
    produced = tuple(model.pids[k][stack[k]] for k in range(K + 1))

    l = 0
    for k in range(1, K + 1):
        beta = model.beta[k][stack[k]].get(s)
        if beta is None:
            break
        ended = rng.random() < beta
        if trace is not None:
            trace.append(("term", k, (stack[k], s), ended))
        if not ended:
            break
        l = k
    if l == K:
        es.done = True
    else:
        for k in range(l, -1, -1):
            child = _select(model, k + 1, stack[k + 1], s, rng.random())
            if trace is not None:
                trace.append(("select", k + 1, (stack[k + 1], s), child))
            stack[k] = child
    ocum = model.omega_cum[s]
    o = draw(ocum[0], ocum[1], rng.random())
    es.state = s
    es.t += 1
    return TrajectoryStep(s=model.states[s], o=model.symbols[o], policies=produced, l=l)


def simulate(h, top_policy_id: str, s0: str, max_steps: int, seed=None, trace: list | None = None) -> Trajectory:
    rng = np.random.default_rng(seed)
    es = init_episode(h, top_policy_id, s0, rng)
    steps = []
    while len(steps) < max_steps and not es.done:
        steps.append(step(h, es, rng, trace))
    return Trajectory(top=top_policy_id, seed=seed, s0=s0, steps=tuple(steps), done=es.done)
