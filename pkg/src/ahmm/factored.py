"""Fully factored states: M independent components, each with its own dynamics and sensor.

The joint state is a tuple with one value per component. An action moves
every component independently and each component emits its own observation
symbol, so Pr(o | pi^0) is a product of per-component sums and the proposal
never touches the joint state space. Policies are still keyed by the joint
tuple; the tables are sparse (only the tuples the author lists).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from itertools import product
from typing import Mapping

from .belief_chain import BeliefChain, downward, init_chain, roll_over, set_root
from .compiled import _cum
from .errors import HierarchyError, InputError, ZeroEvidence
from .hierarchy import (
    TOL,
    ActionModel,
    ObservationModel,
    PolicyHierarchy,
    PolicySpec,
    StateSpace,
    Violation,
    NOT_NORMALIZED,
    TRANSITION_SUPPORT,
    UNKNOWN_STATE,
)
from .particles import ParticleFilter, pick
from .rb_sis import sample_upward

SEP = "|"


@dataclass(frozen=True)
class Component:
    """One state variable: its values, one-step neighbours, per-action dynamics and sensor."""

    name: str
    values: tuple[str, ...]
    neighbours: Mapping[str, frozenset[str]]
    transition: Mapping[str, Mapping[str, Mapping[str, float]]]  # [a][v][v2]
    symbols: tuple[str, ...]
    likelihood: Mapping[str, Mapping[str, float]]  # [v][o]


@dataclass(frozen=True)
class FactoredHierarchy:
    """Policies over joint tuples. Level 0 lists the action ids shared by all components."""

    components: tuple[Component, ...]
    actions: tuple[str, ...]
    levels: tuple[tuple[PolicySpec, ...], ...]  # levels[0] are the actions
    _cache: dict = field(default_factory=dict, compare=False, repr=False)

    @property
    def M(self) -> int:
        return len(self.components)

    @property
    def K(self) -> int:
        return len(self.levels) - 1

    @property
    def compiled(self):
        if "model" not in self._cache:
            self._cache["model"] = FactoredModel(self)
        return self._cache["model"]


def joint_id(values) -> str:
    return SEP.join(values)


def split_id(s: str) -> tuple:
    return tuple(s.split(SEP))


def validate_factored(fh: FactoredHierarchy) -> list[Violation]:
    """Per-component checks; policy-level checks run on the flattened model when it is small."""
    out = []
    for comp in fh.components:
        vals = set(comp.values)
        for a, per in comp.transition.items():
            if a not in fh.actions:
                out.append(Violation("unknown action", a, None, f"component {comp.name}"))
            for v, dist in per.items():
                if v not in vals:
                    out.append(Violation(UNKNOWN_STATE, a, v, f"component {comp.name}"))
                    continue
                if abs(sum(dist.values()) - 1.0) > TOL:
                    out.append(Violation(NOT_NORMALIZED, a, v, f"component {comp.name}"))
                legal = set(comp.neighbours.get(v, ())) | {v}
                for v2 in dist:
                    if v2 not in legal:
                        out.append(Violation(TRANSITION_SUPPORT, a, v, f"{comp.name}: {v2}"))
        for v in comp.values:
            row = comp.likelihood.get(v)
            if row is None or abs(sum(row.values()) - 1.0) > TOL:
                out.append(Violation(NOT_NORMALIZED, None, v, f"observation row of {comp.name}"))
    return out


def flatten(fh: FactoredHierarchy) -> PolicyHierarchy:
    """Equivalent flat hierarchy over joint states 'v1|v2|...' and joint symbols 'o1|o2|...'.

    Joint probabilities multiply the component factors left to right.
    """
    comps = fh.components
    states = tuple(joint_id(v) for v in product(*(c.values for c in comps)))
    nbrs = {}
    for vals in product(*(c.values for c in comps)):
        around = [sorted(set(c.neighbours.get(v, ())) | {v}) for c, v in zip(comps, vals)]
        nbrs[joint_id(vals)] = frozenset(joint_id(x) for x in product(*around)) - {joint_id(vals)}
    transition = {}
    for a in fh.actions:
        per = {}
        for vals in product(*(c.values for c in comps)):
            rows = [c.transition.get(a, {}).get(v) for c, v in zip(comps, vals)]
            if any(r is None for r in rows):
                continue
            dist = {}
            for combo in product(*(sorted(r.items()) for r in rows)):
                p = 1.0
                for _, q in combo:
                    p *= q
                if p > 0.0:
                    dist[joint_id(v for v, _ in combo)] = p
            per[joint_id(vals)] = dist
        transition[a] = per
    symbols = tuple(joint_id(o) for o in product(*(c.symbols for c in comps)))
    likelihood = {}
    for vals in product(*(c.values for c in comps)):
        row = {}
        for combo in product(*(sorted(c.likelihood[v].items()) for c, v in zip(comps, vals))):
            p = 1.0
            for _, q in combo:
                p *= q
            row[joint_id(o for o, _ in combo)] = p
        likelihood[joint_id(vals)] = row

    def conv(p: PolicySpec) -> PolicySpec:
        if p.level == 0:
            return PolicySpec(p.id, 0, frozenset(s for s in transition[p.id]))
        return PolicySpec(
            p.id,
            p.level,
            frozenset(joint_id(s) for s in p.applicable),
            {joint_id(s): b for s, b in p.stop_prob.items()},
            {joint_id(s): dict(d) for s, d in p.select.items()},
        )

    return PolicyHierarchy(
        StateSpace(states, nbrs),
        ActionModel(tuple(fh.actions), transition),
        ObservationModel(symbols, likelihood),
        tuple(tuple(conv(p) for p in lvl) for lvl in fh.levels),
    )


class _Lazy(dict):
    """dict that builds missing entries on demand."""

    def __init__(self, build):
        super().__init__()
        self._build = build

    def __missing__(self, key):
        v = self[key] = self._build(key)
        return v


class FactoredModel:
    """Compiled view with the same attribute names the chain operations use.

    States are tuples of component value indices. The state node is never
    tabulated: :meth:`state_node` returns (None, None) and the filters work
    with per-component tables instead.
    """

    factored = True

    def __init__(self, fh: FactoredHierarchy):
        self.hierarchy = fh
        self.K = fh.K
        self.M = fh.M
        comps = fh.components
        self.vidx = [{v: i for i, v in enumerate(c.values)} for c in comps]
        self.values = [c.values for c in comps]
        self.pids = [tuple(p.id for p in lvl) for lvl in fh.levels]
        self.pidx = [{pid: i for i, pid in enumerate(ids)} for ids in self.pids]
        self.aidx = {a: i for i, a in enumerate(fh.actions)}

        # per component: domain around each value, transition rows aligned with it
        self.comp_domain = []
        self.comp_row = []  # [m][a][v] -> tuple or None
        self.comp_cum = []
        for m, c in enumerate(comps):
            vi = self.vidx[m]
            dom = [tuple(sorted({vi[n] for n in c.neighbours.get(v, ())} | {i})) for i, v in enumerate(c.values)]
            self.comp_domain.append(dom)
            rows, cums = [], []
            for a in fh.actions:
                r = [None] * len(c.values)
                q = [None] * len(c.values)
                for v, dist in c.transition.get(a, {}).items():
                    i = vi[v]
                    d = {vi[x]: float(p) for x, p in dist.items()}
                    r[i] = tuple(d.get(j, 0.0) for j in dom[i])
                    q[i] = _cum([(j, d.get(j, 0.0)) for j in dom[i]])
                rows.append(r)
                cums.append(q)
            self.comp_row.append(rows)
            self.comp_cum.append(cums)
        self.oidx = [{o: i for i, o in enumerate(c.symbols)} for c in comps]
        self.omega_col = []  # [m][o][v]
        self.omega_cum = []  # [m][v]
        for m, c in enumerate(comps):
            cols = [[0.0] * len(c.values) for _ in c.symbols]
            cums = [None] * len(c.values)
            for v, row in c.likelihood.items():
                i = self.vidx[m][v]
                for o, p in row.items():
                    cols[self.oidx[m][o]][i] = float(p)
                cums[i] = _cum([(self.oidx[m][o], float(p)) for o, p in row.items()])
            self.omega_col.append(cols)
            self.omega_cum.append(cums)

        def key(s):
            return tuple(self.vidx[m][v] for m, v in enumerate(s))

        self.applicable = []
        self.beta = [[{} for _ in lvl] for lvl in fh.levels]
        self.select_row = [[{} for _ in lvl] for lvl in fh.levels]
        self.select_cum = [[{} for _ in lvl] for lvl in fh.levels]
        self.applicable.append(_Lazy(self._actions_at))
        for k in range(1, self.K + 1):
            per = {}
            for i, p in enumerate(fh.levels[k]):
                for s in p.applicable:
                    per.setdefault(key(s), []).append(i)
            app = _Lazy(lambda s: ())
            app.update({s: tuple(v) for s, v in per.items()})
            self.applicable.append(app)
        for k in range(1, self.K + 1):
            cidx = self.pidx[k - 1]
            for i, p in enumerate(fh.levels[k]):
                self.beta[k][i] = {key(d): float(b) for d, b in p.stop_prob.items()}
                for s, dist in p.select.items():
                    si = key(s)
                    dom = self.applicable[k - 1][si]
                    probs = {cidx[c]: float(v) for c, v in dist.items()}
                    self.select_row[k][i][si] = tuple(probs.get(c, 0.0) for c in dom)
                    self.select_cum[k][i][si] = _cum([(c, probs.get(c, 0.0)) for c in dom])

    def _actions_at(self, s) -> tuple:
        return tuple(
            a for a in range(len(self.pids[0])) if all(self.comp_row[m][a][v] is not None for m, v in enumerate(s))
        )

    def state_key(self, values) -> tuple:
        """Joint value ids (tuple or 'v1|v2' string) to the internal index tuple."""
        if isinstance(values, str):
            values = split_id(values)
        try:
            return tuple(self.vidx[m][v] for m, v in enumerate(values))
        except (KeyError, IndexError):
            raise InputError(f"unknown joint state {values!r}") from None

    def state_name(self, s) -> str:
        return joint_id(self.values[m][v] for m, v in enumerate(s))

    def obs_key(self, o) -> tuple:
        if isinstance(o, str):
            o = split_id(o)
        try:
            return tuple(self.oidx[m][x] for m, x in enumerate(o))
        except (KeyError, IndexError):
            raise InputError(f"unknown joint observation {o!r}") from None

    def state_node(self, s, actions):
        return None, None

    def select_rows(self, k, parents, s, children):
        table = self.select_row[k]
        out = []
        for p in parents:
            r = table[p].get(s)
            out.append(r if r is not None else (1.0 / len(children),) * len(children))
        return tuple(out)

    def state_likelihood(self, prev, actions, s) -> list:
        """Pr(s | pi^0 = a, prev) for each action a: the product of component factors."""
        out = []
        for a in actions:
            p = 1.0
            for m, (v0, v) in enumerate(zip(prev, s)):
                row = self.comp_row[m][a][v0]
                if row is None:
                    p = 0.0
                    break
                dom = self.comp_domain[m][v0]
                p *= row[dom.index(v)] if v in dom else 0.0
            out.append(p)
        return out


@dataclass(frozen=True)
class FactoredReversal:
    """Evidence-reversed view of a chain over a factored state.

    ``chain`` is rooted at the action node with Pr(pi^0 | o) as its root
    marginal; ``components[x][m]`` is (domain, Pr(s^m | pi^0 = x-th action, o)).
    """

    chain: BeliefChain
    components: tuple
    weight: float


def _action_posteriors(model, prev, actions, o):
    """Per action: (likelihood Pr(o | a), unnormalized per-component posteriors)."""
    liks = []
    comps = []
    for a in actions:
        lik = 1.0
        per = []
        for m in range(model.M):
            v0 = prev[m]
            row = model.comp_row[m][a][v0]
            if row is None:
                lik = 0.0
                per = None
                break
            col = model.omega_col[m][o[m]]
            dom = model.comp_domain[m][v0]
            post = [p * col[v] for p, v in zip(row, dom)]
            z = sum(post)
            lik *= z
            per.append((dom, post, z))
        liks.append(lik)
        comps.append(per)
    return liks, comps


def factored_evidence_reversal(model, c: BeliefChain, o) -> FactoredReversal:
    """Condition the action node on a joint observation without enumerating joint states.

    The root moves to the action node. Pr(o | a) is a product over components
    of one-dimensional sums, so the cost is linear in M per action value.
    """
    c = set_root(c, 1)
    prev = c.start_state[0]
    liks, comps = _action_posteriors(model, prev, c.domains[1], o)
    joint = [p * q for p, q in zip(c.rmarg, liks)]
    w = sum(joint)
    if not w > 0.0:
        raise ZeroEvidence("observation impossible under every action")
    per_action = tuple(
        None if cs is None else tuple((dom, tuple(x / z for x in post) if z > 0 else None) for dom, post, z in cs)
        for cs in comps
    )
    return FactoredReversal(c._replace(rmarg=tuple(x / w for x in joint)), per_action, w)


def factored_sample(model, er: FactoredReversal, u):
    """(action index in the action domain, joint state, l) from a reversed factored chain.

    Uniform layout: u[0] action, u[1..M] components, then two per level as in
    the flat sampler.
    """
    c = er.chain
    x = pick(c.rmarg, u[0])
    s = tuple(dom[pick(post, u[1 + m])] for m, (dom, post) in enumerate(er.components[x]))
    ms = [None] * (c.root + 1)
    ms[1] = c.rmarg
    l = sample_upward(model, c, ms, x, s, u, 1 + model.M)
    return x, s, l


def factored_step(model, c: BeliefChain, o, u, t: int, memo: dict | None = None):
    """Fused RB step on a factored chain; mirrors :func:`ahmm.rb_sis.particle_step`."""
    key = id(c)
    if memo is not None and key in memo:
        ms, joint, comps, w = memo[key]
    else:
        ms = downward(c, 1)
        liks, comps = _action_posteriors(model, c.start_state[0], c.domains[1], o)
        joint = [p * q for p, q in zip(ms[1], liks)]
        w = sum(joint)
        if memo is not None:
            memo[key] = (ms, joint, comps, w)
    if not w > 0.0:
        return None
    x = pick(joint, u[0] * w)
    s = tuple(dom[pick(post, u[1 + m] * z)] for m, (dom, post, z) in enumerate(comps[x]))
    l = sample_upward(model, c, ms, x, s, u, 1 + model.M)
    rkey = (key, s, l)
    if memo is not None and rkey in memo:
        nxt, corr = memo[rkey]
    else:
        lam = model.state_likelihood(c.start_state[0], c.domains[1], s)
        try:
            nxt, _, corr = roll_over(model, c, ms, s, -1, l, t, lam)
        except (ZeroEvidence, HierarchyError):
            nxt, corr = None, 0.0
        if memo is not None:
            memo[rkey] = (nxt, corr)
    if nxt is None:
        return None
    if l < model.K - 1:
        corr = 1.0
    return nxt, math.log(w * corr), s, l


def flat_step(model, c: BeliefChain, o: int, u, t: int, M: int, split):
    """The same proposal as :func:`factored_step`, computed on a flattened model.

    The action is drawn from Pr(a | o) obtained by summing over joint states,
    then the joint state component by component from the exact conditionals
    of Pr(s | a, o). ``split(s)`` maps a flat state index to its tuple of
    component value indices. Used as the brute-force reference for the factored path.
    """
    ms = downward(c)
    dom0 = c.domains[0]
    col = model.omega_col[o]
    posts = [[p * col[s] for p, s in zip(row, dom0)] for row in c.cpts[0]]
    liks = [sum(p) for p in posts]
    joint = [a * b for a, b in zip(ms[1], liks)]
    w = sum(joint)
    if not w > 0.0:
        return None
    x = pick(joint, u[0] * w)
    cand = [(split(s), p) for s, p in zip(dom0, posts[x]) if p > 0.0]
    fixed = ()
    for m in range(M):
        mass = {}
        for vals, p in cand:
            mass[vals[m]] = mass.get(vals[m], 0.0) + p
        keys = sorted(mass)
        probs = [mass[k] for k in keys]
        v = keys[pick(probs, u[1 + m] * sum(probs))]
        fixed += (v,)
        cand = [(vals, p) for vals, p in cand if vals[m] == v]
    s = next(s for s in dom0 if split(s) == fixed)
    l = sample_upward(model, c, ms, x, s, u, 1 + M)
    i = dom0.index(s)
    try:
        nxt, _, corr = roll_over(model, c, ms, s, i, l, t)
    except (ZeroEvidence, HierarchyError):
        return None
    if l < model.K - 1:
        corr = 1.0
    return nxt, math.log(w * corr), s, l


class FactoredRBSISFilter(ParticleFilter):
    """RB-SIS over a fully factored state. Observations are tuples of component symbol indices."""

    def __init__(self, model, n, seed, s0, top_prior: dict | None = None, threshold=0.5, workers=1):
        super().__init__(model, n, seed, threshold, workers)
        self.width = 1 + model.M + 2 * (model.K - 1)
        if top_prior is None:
            dom = model.applicable[model.K][s0]
            top_prior = {p: 1.0 / len(dom) for p in dom}
        c0 = init_chain(model, top_prior, s0)
        self.chains = [c0] * n
        self.samples = [(s0, model.K - 1)] * n

    def _reindex(self, idx):
        self.chains = [self.chains[i] for i in idx]
        self.samples = [self.samples[i] for i in idx]

    def _advance(self, lo, hi, o, rows):
        model, t = self.model, self.t
        chains, samples = self.chains, self.samples
        alive = self.weights
        memo = {}
        old = list(chains[lo:hi])  # keeps ids stable while chains[i] is replaced
        out = []
        for i in range(lo, hi):
            if not alive[i] > 0.0:
                out.append(None)
                continue
            r = factored_step(model, chains[i], o, rows[i], t, memo)
            if r is None:
                out.append(None)
                continue
            chains[i], inc, s, l = r
            samples[i] = (s, l)
            out.append(inc)
        del old
        return out

    def _level_estimate(self, k, kind):
        if kind != "predicted":
            raise ValueError("the factored filter reports predicted estimates only")
        from .belief_chain import level_marginal

        w = self.weights.tolist()
        out = [0.0] * len(self.model.pids[k])
        for wi, c in zip(w, self.chains):
            if wi > 0.0:
                for p, v in zip(c.domains[k + 1], level_marginal(c, k)):
                    out[p] += wi * v
        return out


class FlatReferenceFilter(FactoredRBSISFilter):
    """Runs :func:`flat_step` on the flattened hierarchy with the factored filter's RNG layout."""

    def __init__(self, factored_model, flat_model, n, seed, s0: int, top_prior=None, threshold=0.5, workers=1):
        ParticleFilter.__init__(self, flat_model, n, seed, threshold, workers)
        self.M = factored_model.M
        self.width = 1 + self.M + 2 * (flat_model.K - 1)
        self._split = [factored_model.state_key(s) for s in flat_model.states]
        if top_prior is None:
            dom = flat_model.applicable[flat_model.K][s0]
            top_prior = {p: 1.0 / len(dom) for p in dom}
        c0 = init_chain(flat_model, top_prior, s0)
        self.chains = [c0] * n
        self.samples = [(s0, flat_model.K - 1)] * n

    def _advance(self, lo, hi, o, rows):
        model, t = self.model, self.t
        out = []
        for i in range(lo, hi):
            if not self.weights[i] > 0.0:
                out.append(None)
                continue
            r = flat_step(model, self.chains[i], o, rows[i], t, self.M, self._split.__getitem__)
            if r is None:
                out.append(None)
                continue
            self.chains[i], inc, s, l = r
            self.samples[i] = (s, l)
            out.append(inc)
        return out
