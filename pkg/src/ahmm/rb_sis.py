"""Rao-Blackwellised SIS: sample only (s_t, l_t), keep the policy stack exact per particle.

Each particle carries its own belief chain, conditioned on the particle's
sampled state and termination history. Chains are immutable, so particles
that share an ancestor after resampling share the same chain object.
"""

from __future__ import annotations

import math

from .belief_chain import (
    BeliefChain,
    absorb_state,
    absorb_termination,
    downward,
    init_chain,
    level_marginal,
    project,
    roll_over,
    set_root,
)
from .errors import HierarchyError, ZeroEvidence
from .particles import ParticleFilter, pick


def evidence_reversal(model, c: BeliefChain, o: int):
    """Root the chain at the state node and condition it on observation o.

    Returns (chain with the posterior state marginal, w = Pr(o | past)), or
    (None, 0.0) when the observation is impossible.
    """
    c = set_root(c, 0)
    col = model.omega_col[o]
    post = [p * col[s] for p, s in zip(c.rmarg, c.domains[0])]
    w = sum(post)
    if not w > 0.0:
        return None, 0.0
    return c._replace(rmarg=tuple([x / w for x in post])), w


def sample_rb(model, er: BeliefChain, u) -> tuple[int, int]:
    """Draw (s, l) from an evidence-reversed chain using uniforms u[0..2K-1].

    Walks upward from the state: s, pi^0, then pi^k and e^k for k = 1..K-1,
    stopping at the first non-terminating level. l never reaches K: the top
    level is conditioned on not terminating, which the caller handles.
    """
    i = pick(er.rmarg, u[0])
    s = er.domains[0][i]
    x = pick(er.cpts[1][i], u[1])
    l = 0
    for k in range(1, model.K):
        x = pick(er.cpts[k + 1][x], u[2 * k])
        beta = model.beta[k][er.domains[k + 1][x]].get(s)
        if beta is None or not u[2 * k + 1] < beta:
            break
        l = k
    return s, l


def rb_update(model, er: BeliefChain, s: int, l: int, t: int):
    """Exact update of an evidence-reversed chain given the sampled (s, l).

    Returns (B_{t+}, C_{t+1}, weight correction). The correction is
    Pr(e^K = F | ...) when l = K - 1 and 1 otherwise.
    """
    a, _ = absorb_state(er, s)
    post, norms = absorb_termination(model, a, l)
    corr = norms[-1] if l == model.K - 1 else 1.0
    return post, project(model, post, s, l, t), corr


def sample_levels(model, c: BeliefChain, ms: list, i: int, s: int, u) -> int:
    """Sample l given s (index i) from a chain with prior node marginals ``ms``.

    Same draws as :func:`sample_rb` without re-rooting: below the root the
    upward conditionals come from Bayes rule on the marginals, above it they
    are the stored tables.
    """
    v = [a * row[i] for a, row in zip(ms[1], c.cpts[0])]
    x = pick(v, u[1] * sum(v))
    return sample_upward(model, c, ms, x, s, u, 2)


def sample_upward(model, c: BeliefChain, ms: list, x: int, s, u, off: int) -> int:
    """Termination level given pi^0 = domains[1][x] and the arrived state s.

    Level k consumes u[off + 2k - 2] for pi^k and u[off + 2k - 1] for e^k.
    """
    r = c.root
    cpts = c.cpts
    l = 0
    for k in range(1, model.K):
        j = k + 1
        a, b = u[off + 2 * k - 2], u[off + 2 * k - 1]
        if j <= r:
            v = [m * row[x] for m, row in zip(ms[j], cpts[k])]
            x = pick(v, a * sum(v))
        else:
            x = pick(cpts[j][x], a)
        beta = model.beta[k][c.domains[j][x]].get(s)
        if beta is None or not b < beta:
            break
        l = k
    return l


def particle_step(model, c: BeliefChain, o: int, u, t: int, memo: dict | None = None):
    """(C_{t+1}, log weight increment, s, l), or None if the particle dies.

    Proposal: (s, l) from the chain with o reversed into the state node;
    weight Pr(o | past), times Pr(top level continues) when l = K - 1.
    ``memo`` caches the deterministic parts per chain object within one
    step, so resampled copies of a particle share the work.
    """
    key = id(c)
    if memo is not None and key in memo:
        ms, post, w = memo[key]
    else:
        ms = downward(c)
        col = model.omega_col[o]
        post = [p * col[x] for p, x in zip(ms[0], c.domains[0])]
        w = sum(post)
        if memo is not None:
            memo[key] = (ms, post, w)
    if not w > 0.0:
        return None
    i = pick(post, u[0] * w)
    s = c.domains[0][i]
    l = sample_levels(model, c, ms, i, s, u)
    rkey = (key, i, l)
    if memo is not None and rkey in memo:
        nxt, corr = memo[rkey]
    else:
        try:
            nxt, _, corr = roll_over(model, c, ms, s, i, l, t)
        except (ZeroEvidence, HierarchyError):
            nxt, corr = None, 0.0
        if memo is not None:
            memo[rkey] = (nxt, corr)
    if nxt is None:
        return None
    if l < model.K - 1:
        corr = 1.0
    return nxt, math.log(w * corr), s, l


class RBSISFilter(ParticleFilter):
    """Particle set of belief chains; estimates are weighted chain marginals."""

    def __init__(self, model, n, seed, s0: int, top_prior: dict | None = None, threshold=0.5, workers=1):
        super().__init__(model, n, seed, threshold, workers)
        self.width = 2 * model.K
        if top_prior is None:
            dom = model.applicable[model.K][s0]
            top_prior = {p: 1.0 / len(dom) for p in dom}
        c0 = init_chain(model, top_prior, s0)
        self.chains = [c0] * n
        self.previous = [None] * n  # (C_t, s_t, l_t) for filtered estimates
        self.samples = [(s0, model.K - 1)] * n

    def _reindex(self, idx):
        self.chains = [self.chains[i] for i in idx]
        self.previous = [self.previous[i] for i in idx]
        self.samples = [self.samples[i] for i in idx]

    def posterior(self, i: int) -> BeliefChain:
        """B_{t+} of particle i, rebuilt with the reversal-based absorb operations."""
        c, s, l = self.previous[i]
        return absorb_termination(self.model, absorb_state(c, s)[0], l)[0]

    def _advance(self, lo, hi, o, rows):
        model, t = self.model, self.t
        chains, prev, samples = self.chains, self.previous, self.samples
        alive = self.weights
        memo = {}  # chains are alive in self.chains for the whole loop, so ids are stable
        out = []
        for i in range(lo, hi):
            if not alive[i] > 0.0:
                out.append(None)
                continue
            r = particle_step(model, chains[i], o, rows[i], t, memo)
            if r is None:
                out.append(None)
                continue
            nxt, inc, s, l = r
            prev[i] = (chains[i], s, l)
            chains[i] = nxt
            samples[i] = (s, l)
            out.append(inc)
        return out

    def _level_estimate(self, k, kind):
        if kind not in ("predicted", "filtered"):
            raise ValueError(f"unknown estimate kind {kind!r}")
        w = self.weights.tolist()
        live = [i for i in range(self.n) if w[i] > 0.0]
        if kind == "predicted":
            chains = [self.chains[i] for i in live]
        else:
            chains = [self.posterior(i) for i in live]
        margs = [(c.domains[k + 1], level_marginal(c, k)) for c in chains]
        out = [0.0] * len(self.model.pids[k])
        if all(m == margs[0] for m in margs):
            for p, v in zip(*margs[0]):
                out[p] = v
            return out
        for i, (dom, h) in zip(live, margs):
            wi = w[i]
            for p, v in zip(dom, h):
                out[p] += wi * v
        return out
