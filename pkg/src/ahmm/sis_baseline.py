"""Plain SIS baseline: every particle samples the whole policy stack.

The proposal reverses the observation into the state node only: the next
state is drawn from transition(pi^0, s) * omega(., o) and the weight is its
normaliser. Terminations and re-selections are forward-sampled.
"""

from __future__ import annotations

import math

import numpy as np

from .particles import ParticleFilter, pick
from .simulator import draw


def sis_particle_step(model, stack: tuple, s_prev: int, o: int, u):
    """Advance one full particle. Returns (new stack, s, l, log weight increment) or None if it dies.

    Uniform layout: u[0] state, u[1..K] termination draws, u[K+1..2K+1] re-selections.
    """
    K = model.K
    row = model.trans_row[stack[0]][s_prev]
    if row is None:
        return None
    dom = model.state_domain[s_prev]
    col = model.omega_col[o]
    q = [p * col[s] for p, s in zip(row, dom)]
    w = sum(q)
    if not w > 0.0:
        return None
    s = dom[pick(q, u[0] * w)]
    l = 0
    for k in range(1, K + 1):
        beta = model.beta[k][stack[k]].get(s)
        if beta is None or not u[k] < beta:
            break
        l = k
    if l == K:
        return None
    new = list(stack)
    for k in range(l, -1, -1):
        entry = model.select_cum[k + 1][new[k + 1]].get(s)
        if entry is None:
            return None
        new[k] = draw(entry[0], entry[1], u[K + 1 + k])
    return tuple(new), s, l, math.log(w)


class SISFilter(ParticleFilter):
    """Estimates are weighted frequencies of the sampled policies."""

    def __init__(self, model, n, seed, s0: int, top_prior: dict | None = None, threshold=0.5, workers=1):
        super().__init__(model, n, seed, threshold, workers)
        K = model.K
        self.width = 2 * K + 2
        if top_prior is None:
            dom = model.applicable[K][s0]
            top_prior = {p: 1.0 / len(dom) for p in dom}
        tops = sorted(p for p, v in top_prior.items() if v > 0)
        top_cum = []
        acc = 0.0
        for p in tops:
            acc += top_prior[p]
            top_cum.append(acc)
        rows = np.random.default_rng([self.seed, 0]).random((n, K + 1)).tolist()
        stacks = []
        for i in range(n):
            st = [0] * (K + 1)
            st[K] = draw(tuple(tops), top_cum, rows[i][K])
            for k in range(K - 1, -1, -1):
                entry = model.select_cum[k + 1][st[k + 1]][s0]
                st[k] = draw(entry[0], entry[1], rows[i][k])
            stacks.append(tuple(st))
        self.stacks = stacks
        self.previous = [None] * n
        self.states = [s0] * n

    def _reindex(self, idx):
        self.stacks = [self.stacks[i] for i in idx]
        self.previous = [self.previous[i] for i in idx]
        self.states = [self.states[i] for i in idx]

    def _advance(self, lo, hi, o, rows):
        model = self.model
        stacks, prev, states = self.stacks, self.previous, self.states
        alive = self.weights
        out = []
        for i in range(lo, hi):
            if not alive[i] > 0.0:
                out.append(None)
                continue
            r = sis_particle_step(model, stacks[i], states[i], o, rows[i])
            if r is None:
                out.append(None)
                continue
            prev[i] = stacks[i]
            stacks[i], states[i], _, inc = r
            out.append(inc)
        return out

    def _level_estimate(self, k, kind):
        if kind not in ("predicted", "filtered"):
            raise ValueError(f"unknown estimate kind {kind!r}")
        source = self.stacks if kind == "predicted" else self.previous
        out = [0.0] * len(self.model.pids[k])
        for wi, st in zip(self.weights.tolist(), source):
            if wi > 0.0:
                out[st[k]] += wi
        return out
