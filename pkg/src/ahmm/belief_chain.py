"""Exact belief chain over the current policy stack and state.

Node j = 0 is the state node and node j = k + 1 holds the level-k policy.
Every link points away from ``root``: the parent of node j is j + 1 below the
root and j - 1 above it. ``cpts[j][x]`` is the distribution of node j given
its parent takes the x-th value of the parent's local domain. Tables are
tuples of floats because local domains are tiny and tuple arithmetic beats
array dispatch at that size.
"""

from __future__ import annotations

import math
from itertools import product
from typing import NamedTuple

from .errors import HierarchyError, InputError, ZeroEvidence


class BeliefChain(NamedTuple):
    domains: tuple  # per node: tuple of state or policy indices
    cpts: tuple  # per node: rows indexed by parent value, or None (root / instantiated)
    root: int
    rmarg: tuple  # distribution over domains[root]
    start_time: tuple  # tau^k per level
    start_state: tuple  # b^k per level
    observed: int = -1  # instantiated state, -1 while the state node is free

    @property
    def K(self) -> int:
        return len(self.domains) - 2


def _uniform(n):
    return (1.0 / n,) * n


def reverse(p, C):
    """Reverse a link parent->child given the parent marginal p and child CPT C.

    Returns the child marginal and the parent's CPT given the child. Columns
    with zero mass get a uniform placeholder row.
    """
    q = []
    D = []
    m = len(p)
    for col in zip(*C):
        row = [a * b for a, b in zip(p, col)]
        z = sum(row)
        q.append(z)
        D.append(tuple([x / z for x in row]) if z > 0.0 else _uniform(m))
    return tuple(q), tuple(D)


def propagate(m, C):
    """Marginal of a child given the parent marginal m."""
    out = [0.0] * len(C[0])
    for a, row in zip(m, C):
        if a:
            for i, c in enumerate(row):
                out[i] += a * c
    return tuple(out)


def set_root(c: BeliefChain, target: int) -> BeliefChain:
    """Move the root to node ``target`` by successive link reversals."""
    r = c.root
    if r == target:
        return c
    cpts = list(c.cpts)
    m = c.rmarg
    step = 1 if target > r else -1
    while r != target:
        n = r + step
        m, cpts[r] = reverse(m, cpts[n])
        cpts[n] = None
        r = n
    return c._replace(cpts=tuple(cpts), root=r, rmarg=m)


def marginal(c: BeliefChain, j: int) -> tuple:
    """Marginal of node j, propagated from the root along the chain."""
    r = c.root
    m = c.rmarg
    step = 1 if j > r else -1
    while r != j:
        r += step
        m = propagate(m, c.cpts[r])
    return m


def level_marginal(c: BeliefChain, k: int) -> tuple:
    return marginal(c, k + 1)


def init_chain(model, top_prior, s0: int, t0: int = 0) -> BeliefChain:
    """Chain at time 1: top policy from ``top_prior`` and every level below selected at s0.

    ``top_prior`` maps top-level policy indices to probabilities.
    """
    K = model.K
    top_dom = model.applicable[K][s0]
    bad = [p for p, v in top_prior.items() if v > 0 and p not in top_dom]
    if bad:
        raise InputError(f"prior puts mass on policies not applicable at s0: {bad}")
    z = sum(top_prior.get(p, 0.0) for p in top_dom)
    if not z > 0:
        raise InputError("top-level prior has no mass at s0")
    domains = [None] * (K + 2)
    cpts = [None] * (K + 2)
    domains[K + 1] = top_dom
    for k in range(K - 1, -1, -1):
        dom = model.applicable[k][s0]
        if not dom:
            raise HierarchyError(f"no applicable level-{k} policy at state {s0}")
        domains[k + 1] = dom
        cpts[k + 1] = model.select_rows(k + 1, domains[k + 2], s0, dom)
    domains[0], cpts[0] = model.state_node(s0, domains[1])
    return BeliefChain(
        domains=tuple(domains),
        cpts=tuple(cpts),
        root=K + 1,
        rmarg=tuple(top_prior.get(p, 0.0) / z for p in top_dom),
        start_time=(t0,) * (K + 1),
        start_state=(s0,) * (K + 1),
    )


def absorb_state(c: BeliefChain, s_obs: int):
    """Condition on the state; returns the chain rooted at the action node and Pr(s = s_obs)."""
    c = set_root(c, 0)
    try:
        i = c.domains[0].index(s_obs)
    except ValueError:
        raise ZeroEvidence(f"state {s_obs} outside the state-node domain") from None
    lik = c.rmarg[i]
    if not lik > 0.0:
        raise ZeroEvidence(f"state {s_obs} has probability zero")
    domains = ((s_obs,),) + c.domains[1:]
    cpts = (None, None) + c.cpts[2:]
    return c._replace(domains=domains, cpts=cpts, root=1, rmarg=c.cpts[1][i], observed=s_obs), lik


def termination_likelihood(model, k: int, dom, s: int, terminated: bool) -> list:
    """Pr(e^k | pi^k, s, e^{k-1}=T) for each pi^k in dom."""
    betas = model.beta[k]
    if terminated:
        return [betas[p].get(s, 0.0) for p in dom]
    out = []
    for p in dom:
        b = betas[p].get(s)
        out.append(1.0 if b is None else 1.0 - b)
    return out


def absorb_termination(model, c: BeliefChain, l_obs: int):
    """Absorb e^1..e^l = T and e^{l+1} = F; returns (posterior chain, per-level normalizers)."""
    K = model.K
    if not 0 <= l_obs < K:
        raise InputError(f"termination level {l_obs} outside 0..{K - 1}")
    if c.root != 1 or c.observed < 0:
        raise InputError("absorb_termination needs a state-conditioned chain rooted at the action node")
    s = c.observed
    cpts = list(c.cpts)
    m = c.rmarg
    norms = []
    for k in range(1, l_obs + 2):
        j = k + 1
        q, cpts[k] = reverse(m, cpts[j])
        cpts[j] = None
        lik = termination_likelihood(model, k, c.domains[j], s, k <= l_obs)
        post = [a * b for a, b in zip(q, lik)]
        z = sum(post)
        if not z > 0.0:
            raise ZeroEvidence(f"termination evidence impossible at level {k}")
        m = tuple([x / z for x in post])
        norms.append(z)
    return c._replace(cpts=tuple(cpts), root=l_obs + 2, rmarg=m), norms


def project(model, c: BeliefChain, s_now: int, l_now: int, t: int) -> BeliefChain:
    """Create fresh policies at levels l_now..0 selected at s_now, and a new state node."""
    if c.root != l_now + 2:
        raise InputError("project expects the chain rooted just above the re-selected levels")
    domains = list(c.domains)
    cpts = list(c.cpts)
    for k in range(l_now, -1, -1):
        dom = model.applicable[k][s_now]
        if not dom:
            raise HierarchyError(f"no applicable level-{k} policy at state {s_now}")
        domains[k + 1] = dom
        cpts[k + 1] = model.select_rows(k + 1, domains[k + 2], s_now, dom)
    domains[0], cpts[0] = model.state_node(s_now, domains[1])
    n = l_now + 1
    return BeliefChain(
        domains=tuple(domains),
        cpts=tuple(cpts),
        root=c.root,
        rmarg=c.rmarg,
        start_time=(t,) * n + c.start_time[n:],
        start_state=(s_now,) * n + c.start_state[n:],
    )


def downward(c: BeliefChain, stop: int = 0) -> list:
    """Prior marginals of nodes stop..root, propagated down from the root (entries below stop are None)."""
    r = c.root
    ms = [None] * (r + 1)
    m = ms[r] = c.rmarg
    for j in range(r - 1, stop - 1, -1):
        m = ms[j] = propagate(m, c.cpts[j])
    return ms


def roll_over(model, c: BeliefChain, ms: list, s, i: int, l: int, t: int, lam=None):
    """C_{t+1} from C_t given the arrived state s (index i in the state domain) and level l.

    Equivalent to absorb_state, absorb_termination and project, but computes
    only what survives into C_{t+1}: one forward message from the action
    node up to level l + 1, and reversed tables only for links that end up
    above the new root. ``ms`` are the prior node marginals from
    :func:`downward`. ``lam`` overrides the state likelihood Pr(s | pi^0)
    per action (used when the state node is not tabulated). Returns
    (C_{t+1}, log Pr(s, l | past), last normalizer).
    """
    K = model.K
    if not 0 <= l < K:
        raise InputError(f"termination level {l} outside 0..{K - 1}")
    r = c.root
    cpts = c.cpts
    if lam is None:
        lam = [row[i] for row in cpts[0]]
    alpha = [a * b for a, b in zip(ms[1], lam)]
    z = sum(alpha)
    if not z > 0.0:
        raise ZeroEvidence(f"state {s} has probability zero")
    ll = math.log(z)
    alpha = [a / z for a in alpha]
    for k in range(1, l + 2):
        j = k + 1
        if j <= r:
            mk = ms[k]
            ratio = [a / b if b > 0.0 else 0.0 for a, b in zip(alpha, mk)]
            pred = [b * sum([x * y for x, y in zip(ratio, row)]) for b, row in zip(ms[j], cpts[k])]
        else:
            pred = propagate(alpha, cpts[j])
        lik = termination_likelihood(model, k, c.domains[j], s, k <= l)
        post = [a * b for a, b in zip(pred, lik)]
        z = sum(post)
        if not z > 0.0:
            raise ZeroEvidence(f"termination evidence impossible at level {k}")
        ll += math.log(z)
        alpha = [a / z for a in post]
    new_root = l + 2
    new_cpts = list(cpts)
    for j in range(new_root + 1, r + 1):
        new_cpts[j] = reverse(ms[j], cpts[j - 1])[1]
    new_cpts[new_root] = None
    domains = list(c.domains)
    for k in range(l, -1, -1):
        dom = model.applicable[k][s]
        if not dom:
            raise HierarchyError(f"no applicable level-{k} policy at state {s}")
        domains[k + 1] = dom
        new_cpts[k + 1] = model.select_rows(k + 1, domains[k + 2], s, dom)
    domains[0], new_cpts[0] = model.state_node(s, domains[1])
    n = l + 1
    nxt = BeliefChain(
        tuple(domains),
        tuple(new_cpts),
        new_root,
        tuple(alpha),
        (t,) * n + c.start_time[n:],
        (s,) * n + c.start_state[n:],
    )
    return nxt, ll, z


class StepResult(NamedTuple):
    posterior: BeliefChain  # B_{t+}
    chain: BeliefChain  # C_{t+1}
    log_likelihood: float
    touched: int


def touched_levels(old: BeliefChain, new: BeliefChain) -> int:
    """Policy levels whose node tables differ (by identity) between two chains."""
    n = 0
    for j in range(1, len(new.domains)):
        if (
            new.cpts[j] is not old.cpts[j]
            or new.domains[j] is not old.domains[j]
            or (j in (new.root, old.root) and (new.root != old.root or new.rmarg is not old.rmarg))
        ):
            n += 1
    return n


def state_index(c: BeliefChain, ms: list, s_obs: int) -> int:
    try:
        i = c.domains[0].index(s_obs)
    except ValueError:
        raise ZeroEvidence(f"state {s_obs} outside the state-node domain") from None
    if not ms[0][i] > 0.0:
        raise ZeroEvidence(f"state {s_obs} has probability zero")
    return i


def exact_filter_step(model, c: BeliefChain, s_obs: int, l_obs: int, t: int, posterior: bool = True) -> StepResult:
    """One roll-over of the exact belief given the observed state and termination level.

    C_{t+1} comes from :func:`roll_over`; B_{t+} (optional) from the
    reversal-based absorb operations.
    """
    ms = downward(c)
    i = state_index(c, ms, s_obs)
    nxt, ll, _ = roll_over(model, c, ms, s_obs, i, l_obs, t)
    post = None
    if posterior:
        post = absorb_termination(model, absorb_state(c, s_obs)[0], l_obs)[0]
    return StepResult(post, nxt, ll, touched_levels(c, nxt))


class BeliefState:
    """A belief chain bound to its model, with the termination CPDs derived from beta."""

    __slots__ = ("model", "chain")

    def __init__(self, model, chain: BeliefChain):
        self.model = model
        self.chain = chain

    def termination_prob(self, k: int, p: int, s: int) -> float:
        """Pr(e^k = T | pi^k = p, s, e^{k-1} = T)."""
        return self.model.beta[k][p].get(s, 0.0)

    def marginal(self, k: int) -> tuple:
        return level_marginal(self.chain, k)

    def distribution(self, k: int) -> dict:
        """Level-k marginal keyed by policy id."""
        ids = self.model.pids[k]
        return {ids[p]: v for p, v in zip(self.chain.domains[k + 1], self.marginal(k))}

    def step(self, s_obs: int, l_obs: int, t: int) -> tuple["BeliefState", "BeliefState", float]:
        r = exact_filter_step(self.model, self.chain, s_obs, l_obs, t)
        return BeliefState(self.model, r.posterior), BeliefState(self.model, r.chain), r.log_likelihood


def joint(c: BeliefChain) -> dict:
    """Full joint over node values (node 0 first), by exhaustive expansion."""
    n = len(c.domains)
    out = {}
    for combo in product(*(range(len(d)) for d in c.domains)):
        p = c.rmarg[combo[c.root]]
        for j in range(n):
            if j == c.root or c.cpts[j] is None:
                continue
            parent = j + 1 if j < c.root else j - 1
            p *= c.cpts[j][combo[parent]][combo[j]]
        out[tuple(c.domains[j][combo[j]] for j in range(n))] = p
    return out


def dump_chain(model, c: BeliefChain) -> dict:
    """Structured, id-labelled view of a chain for golden files and debugging."""

    def names(j):
        if j == 0:
            return [model.states[s] for s in c.domains[0]]
        return [model.pids[j - 1][p] for p in c.domains[j]]

    nodes = []
    for j in range(len(c.domains)):
        entry = {"node": "state" if j == 0 else f"level{j - 1}", "domain": names(j)}
        if j == c.root:
            entry["marginal"] = list(c.rmarg)
        elif c.cpts[j] is not None:
            parent = j + 1 if j < c.root else j - 1
            entry["parent"] = "state" if parent == 0 else f"level{parent - 1}"
            entry["cpt"] = [list(r) for r in c.cpts[j]]
        nodes.append(entry)
    return {
        "root": "state" if c.root == 0 else f"level{c.root - 1}",
        "observed": model.states[c.observed] if c.observed >= 0 else None,
        "start_time": list(c.start_time),
        "start_state": [model.states[s] for s in c.start_state],
        "nodes": nodes,
    }
