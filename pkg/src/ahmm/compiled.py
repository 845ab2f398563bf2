"""Dense integer-indexed tables derived from a PolicyHierarchy.

Filters and the simulator work on these. States and per-level policies are
numbered in declaration order; local domains are sorted index tuples.
"""

from __future__ import annotations

from itertools import accumulate


def _cum(items):
    """(keys, cumulative weights) over positive entries, for inverse-CDF sampling."""
    keys = tuple(k for k, p in items if p > 0)
    cum = list(accumulate(p for _, p in items if p > 0))
    return keys, cum


class CompiledHierarchy:
    factored = False

    def __init__(self, h):
        self.hierarchy = h
        self.K = h.K
        self.states = tuple(h.state_space.states)
        self.sidx = {s: i for i, s in enumerate(self.states)}
        nS = len(self.states)
        self.pids = [tuple(p.id for p in lvl) for lvl in h.levels]
        self.pidx = [{pid: i for i, pid in enumerate(ids)} for ids in self.pids]

        # applicable[k][s] -> sorted tuple of level-k policy indices
        self.applicable = []
        for k, lvl in enumerate(h.levels):
            per = [[] for _ in range(nS)]
            for i, p in enumerate(lvl):
                for s in p.applicable:
                    per[self.sidx[s]].append(i)
            self.applicable.append([tuple(x) for x in per])

        # beta[k][p] -> {s: beta}; select rows aligned with applicable[k-1][s]
        self.beta = [[{} for _ in lvl] for lvl in h.levels]
        self.select_row = [[{} for _ in lvl] for lvl in h.levels]
        self.select_cum = [[{} for _ in lvl] for lvl in h.levels]
        for k in range(1, self.K + 1):
            cidx = self.pidx[k - 1]
            for i, p in enumerate(h.levels[k]):
                self.beta[k][i] = {self.sidx[d]: float(b) for d, b in p.stop_prob.items()}
                for s, dist in p.select.items():
                    si = self.sidx[s]
                    dom = self.applicable[k - 1][si]
                    probs = {cidx[c]: float(v) for c, v in dist.items()}
                    self.select_row[k][i][si] = tuple(probs.get(c, 0.0) for c in dom)
                    self.select_cum[k][i][si] = _cum([(c, probs.get(c, 0.0)) for c in dom])

        # state node: domain = neighbours(s) + s, transition rows aligned with it
        nb = h.state_space.neighbours
        self.state_domain = [
            tuple(sorted({self.sidx[n] for n in nb.get(s, ())} | {i})) for i, s in enumerate(self.states)
        ]
        am = h.action_model
        self.trans_row = []
        self.trans_cum = []
        for a in am.actions:
            rows = [None] * nS
            cums = [None] * nS
            for s, dist in am.transition.get(a, {}).items():
                si = self.sidx[s]
                d = {self.sidx[s2]: float(v) for s2, v in dist.items()}
                rows[si] = tuple(d.get(j, 0.0) for j in self.state_domain[si])
                cums[si] = _cum([(j, d.get(j, 0.0)) for j in self.state_domain[si]])
            self.trans_row.append(rows)
            self.trans_cum.append(cums)

        om = h.observation_model
        self.symbols = tuple(om.symbols)
        self.oidx = {o: i for i, o in enumerate(self.symbols)}
        self.omega_col = [[0.0] * nS for _ in self.symbols]
        self.omega_cum = [None] * nS
        for s, row in om.likelihood.items():
            si = self.sidx[s]
            for o, v in row.items():
                self.omega_col[self.oidx[o]][si] = float(v)
            self.omega_cum[si] = _cum([(self.oidx[o], float(v)) for o, v in row.items()])

    def state_node(self, s, actions):
        """Domain and CPT rows Pr(s' | a) for the state node created at s."""
        dom = self.state_domain[s]
        rows = []
        for a in actions:
            r = self.trans_row[a][s]
            rows.append(r if r is not None else (1.0 / len(dom),) * len(dom))
        return dom, tuple(rows)

    def select_rows(self, k, parents, s, children):
        """Rows sigma_p(s, .) over ``children`` for each parent p at level k (uniform if undefined)."""
        table = self.select_row[k]
        out = []
        for p in parents:
            r = table[p].get(s)
            out.append(r if r is not None else (1.0 / len(children),) * len(children))
        return tuple(out)
