"""Brute-force enumeration of every generative history of a compiled hierarchy.

Used as the independent reference for the exact filter and the samplers on
small fixtures. Nothing here shares code with the belief chain: the
enumeration walks the generative process directly.
"""

from __future__ import annotations

from collections import defaultdict
from typing import NamedTuple


class PathNode(NamedTuple):
    t: int
    prob: float  # joint probability of the hidden path (times observation likelihoods if given)
    prefix: tuple  # ((s_1, l_1), ..., (s_t, l_t))
    prev_stack: tuple  # policies (level 0..K) that generated s_t
    prev_tau: tuple
    prev_b: tuple
    s: int
    l: int  # K means the top policy terminated; such nodes are leaves
    stack: tuple | None  # policies after re-selection, None if terminated
    tau: tuple | None
    b: tuple | None


def cascade(model, stack, s):
    """[(l, prob)] for the termination cascade at arrival state s (l = K included)."""
    out = []
    mass = 1.0
    for k in range(1, model.K + 1):
        beta = model.beta[k][stack[k]].get(s)
        if beta is None:
            out.append((k - 1, mass))
            return out
        if beta < 1.0:
            out.append((k - 1, mass * (1.0 - beta)))
        mass *= beta
        if mass == 0.0:
            return out
    out.append((model.K, mass))
    return out


def reselect(model, stack, s, l):
    """[(new_stack, prob)] re-selecting levels l..0 top-down at s."""
    results = [(list(stack), 1.0)]
    for k in range(l, -1, -1):
        nxt = []
        for st, p in results:
            parent = st[k + 1]
            row = model.select_row[k + 1][parent].get(s)
            if row is None:
                continue
            for child, q in zip(model.applicable[k][s], row):
                if q > 0.0:
                    new = list(st)
                    new[k] = child
                    nxt.append((new, p * q))
        results = nxt
    return [(tuple(st), p) for st, p in results]


def initial_stacks(model, top_prior, s0):
    """[(stack, prob)] for the stack selected at s0 under the top-level prior."""
    K = model.K
    out = []
    for top, p in top_prior.items():
        if p <= 0.0:
            continue
        base = [None] * (K + 1)
        base[K] = top
        for st, q in reselect(model, tuple(base), s0, K - 1):
            out.append((st, p * q))
    return out


def walk(model, top_prior, s0, T, observations=None):
    """Yield a PathNode for every history prefix of length 1..T with positive probability.

    With ``observations`` (symbol indices o_1..o_T) each node's probability
    also carries the observation likelihoods up to its depth.
    """
    K = model.K
    zero = (0,) * (K + 1)
    s0s = (s0,) * (K + 1)
    frames = [((), st, zero, s0s, s0, p) for st, p in initial_stacks(model, top_prior, s0)]
    frames.reverse()
    while frames:
        prefix, stack, tau, b, s_prev, prob = frames.pop()
        t = len(prefix) + 1
        a = stack[0]
        row = model.trans_row[a][s_prev]
        children = []
        for s, ps in zip(model.state_domain[s_prev], row):
            if ps <= 0.0:
                continue
            p1 = prob * ps
            if observations is not None:
                p1 *= model.omega_col[observations[t - 1]][s]
                if p1 <= 0.0:
                    continue
            for l, pl in cascade(model, stack, s):
                p2 = p1 * pl
                if p2 <= 0.0:
                    continue
                pre = prefix + ((s, l),)
                if l == K:
                    yield PathNode(t, p2, pre, stack, tau, b, s, l, None, None, None)
                    continue
                n = l + 1
                ntau = (t,) * n + tau[n:]
                nb = (s,) * n + b[n:]
                for nst, pr in reselect(model, stack, s, l):
                    p3 = p2 * pr
                    if p3 <= 0.0:
                        continue
                    yield PathNode(t, p3, pre, stack, tau, b, s, l, nst, ntau, nb)
                    if t < T:
                        children.append((pre, nst, ntau, nb, s, p3))
        children.reverse()
        frames.extend(children)


def _normalize(d):
    z = sum(d.values())
    return {k: v / z for k, v in d.items()} if z > 0 else {}


def conditioned_marginals(model, top_prior, s0, T):
    """Posteriors given the observed state and termination history.

    Returns {prefix: {"prob", "filtered": [dist per level], "predicted": [dist per level]}}
    where filtered is Pr(pi_t^k | s~_t, l~_t) and predicted Pr(pi_{t+1}^k | s~_t, l~_t).
    Prefixes ending in a top-level termination are skipped.
    """
    K = model.K
    acc = defaultdict(lambda: ([defaultdict(float) for _ in range(K + 1)],
                               [defaultdict(float) for _ in range(K + 1)], [0.0]))
    for node in walk(model, top_prior, s0, T):
        if node.stack is None:
            continue
        filt, pred, tot = acc[node.prefix]
        tot[0] += node.prob
        for k in range(K + 1):
            filt[k][node.prev_stack[k]] += node.prob
            pred[k][node.stack[k]] += node.prob
    return {
        pre: {"prob": tot[0], "filtered": [_normalize(f) for f in filt], "predicted": [_normalize(p) for p in pred]}
        for pre, (filt, pred, tot) in acc.items()
    }


def observation_posteriors(model, top_prior, s0, observations):
    """Per-step posteriors given only the observation sequence (no top-level termination).

    Returns a list over t = 1..T of {"evidence": Pr(o_1..t, no top termination),
    "filtered": [Pr(pi_t^k | o)], "predicted": [Pr(pi_{t+1}^k | o)], "state": Pr(s_t | o)}.
    """
    K = model.K
    T = len(observations)
    filt = [[defaultdict(float) for _ in range(K + 1)] for _ in range(T)]
    pred = [[defaultdict(float) for _ in range(K + 1)] for _ in range(T)]
    state = [defaultdict(float) for _ in range(T)]
    ev = [0.0] * T
    for node in walk(model, top_prior, s0, T, observations):
        if node.stack is None:
            continue
        i = node.t - 1
        ev[i] += node.prob
        state[i][node.s] += node.prob
        for k in range(K + 1):
            filt[i][k][node.prev_stack[k]] += node.prob
            pred[i][k][node.stack[k]] += node.prob
    return [
        {
            "evidence": ev[i],
            "filtered": [_normalize(f) for f in filt[i]],
            "predicted": [_normalize(p) for p in pred[i]],
            "state": _normalize(state[i]),
        }
        for i in range(T)
    ]


def count_histories(model, top_prior, s0, T):
    """Number of distinct full-length hidden histories (plus earlier terminated ones)."""
    return sum(1 for n in walk(model, top_prior, s0, T) if n.t == T or n.stack is None)
