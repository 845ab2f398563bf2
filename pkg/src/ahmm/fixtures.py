"""Small hand-authored hierarchies used as oracle substrates and benchmarks."""

from __future__ import annotations

from .hierarchy import (
    ActionModel,
    ObservationModel,
    PolicyHierarchy,
    PolicySpec,
    RegionPartition,
    StateSpace,
    action_policies,
)
from .building import biased_split

T4_LOW = (0.9, 0.7, 0.3, 0.1)


def t4(move_prob: float = 0.9, noisy: bool = True) -> PolicyHierarchy:
    """Four states on a line, two level-1 policies (go-left/go-right), two top policies.

    Moves succeed with ``move_prob`` and otherwise stay put. Observations are
    "lo"/"hi" with Pr(lo | s) = 0.9, 0.7, 0.3, 0.1 (or the identity when
    ``noisy`` is false, with one symbol per state).
    """
    states = ("0", "1", "2", "3")
    nb = {s: frozenset(x for x in (str(i - 1), str(i + 1)) if x in states) for i, s in enumerate(states)}
    trans = {"L": {}, "R": {}, "stay": {}}
    for i, s in enumerate(states):
        trans["stay"][s] = {s: 1.0}
        for a, j in (("L", i - 1), ("R", i + 1)):
            if 0 <= j < 4:
                trans[a][s] = {str(j): move_prob, s: 1.0 - move_prob} if move_prob < 1.0 else {str(j): 1.0}
    actions = ActionModel(actions=("L", "R", "stay"), transition=trans)
    if noisy:
        obs = ObservationModel(
            symbols=("lo", "hi"),
            likelihood={s: {"lo": T4_LOW[i], "hi": round(1.0 - T4_LOW[i], 12)} for i, s in enumerate(states)},
        )
    else:
        obs = ObservationModel(symbols=states, likelihood={s: {s: 1.0} for s in states})
    go_left = PolicySpec(
        id="go-left",
        level=1,
        applicable=frozenset({"1", "2", "3"}),
        stop_prob={"0": 1.0, "1": 0.3},
        select={s: {"L": 0.8, "stay": 0.2} for s in ("1", "2", "3")},
    )
    go_right = PolicySpec(
        id="go-right",
        level=1,
        applicable=frozenset({"0", "1", "2"}),
        stop_prob={"3": 1.0, "2": 0.3},
        select={s: {"R": 0.8, "stay": 0.2} for s in ("0", "1", "2")},
    )

    def top(pid, left):
        sel = {"0": {"go-right": 1.0}, "3": {"go-left": 1.0}}
        for s in ("1", "2"):
            sel[s] = {"go-left": left, "go-right": round(1.0 - left, 12)}
        return PolicySpec(id=pid, level=2, applicable=frozenset(states), stop_prob={}, select=sel)

    return PolicyHierarchy(
        state_space=StateSpace(states=states, neighbours=nb),
        action_model=actions,
        observation_model=obs,
        levels=(action_policies(actions), (go_left, go_right), (top("A", 0.8), top("B", 0.3))),
    )


def line_family(K: int, length: int | None = None, bias: float = 0.8, move_prob: float = 1.0):
    """Line-world hierarchy with regions of 2**k cells at level k < K.

    Each region at level k has an exit-left and an exit-right policy; the top
    level has drift-left/drift-right policies over the whole line that never
    terminate. Geometry is matched across K: below level K the structure
    depends only on the cell position, so termination statistics of the low
    levels are independent of K. Observations are the identity.
    Returns (hierarchy, partition).
    """
    if length is None:
        length = 2 ** (K + 1)
    states = tuple(str(i) for i in range(length))
    nb = {s: frozenset(str(j) for j in (i - 1, i + 1) if 0 <= j < length) for i, s in enumerate(states)}
    trans = {"L": {}, "R": {}}
    for i, s in enumerate(states):
        for a, j in (("L", i - 1), ("R", i + 1)):
            if 0 <= j < length:
                trans[a][s] = {str(j): move_prob, s: 1.0 - move_prob} if move_prob < 1.0 else {str(j): 1.0}
    actions = ActionModel(actions=("L", "R"), transition=trans)
    obs = ObservationModel(symbols=states, likelihood={s: {s: 1.0} for s in states})

    def regions(k):
        size = 2**k
        return [tuple(range(a, min(a + size, length))) for a in range(0, length, size)]

    levels = [action_policies(actions)]
    partitions = []
    for k in range(1, K):
        at = _ids_by_state(levels[k - 1])
        pols = []
        for r in regions(k):
            lo, hi = r[0], r[-1]
            for side in ("L", "R"):
                stop = {str(d): 1.0 for d in (lo - 1, hi + 1) if 0 <= d < length}
                sel = {str(i): biased_split(at[str(i)], _toward(at[str(i)], side, k - 1), bias) for i in r}
                pols.append(
                    PolicySpec(
                        id=f"L{k}[{lo}-{hi}]{side}",
                        level=k,
                        applicable=frozenset(str(i) for i in r),
                        stop_prob=stop,
                        select=sel,
                    )
                )
        levels.append(tuple(pols))
        partitions.append(tuple(frozenset(str(i) for i in r) for r in regions(k)))
    tops = []
    at = _ids_by_state(levels[K - 1])
    for side in ("L", "R"):
        sel = {s: biased_split(at[s], _toward(at[s], side, K - 1), bias) for s in states}
        tops.append(PolicySpec(id=f"drift-{side}", level=K, applicable=frozenset(states), stop_prob={}, select=sel))
    levels.append(tuple(tops))
    partitions.append((frozenset(states),))
    h = PolicyHierarchy(
        state_space=StateSpace(states=states, neighbours=nb),
        action_model=actions,
        observation_model=obs,
        levels=tuple(levels),
    )
    return h, RegionPartition(partitions=tuple(partitions))


def _ids_by_state(level):
    out = {}
    for p in level:
        for s in p.applicable:
            out.setdefault(s, []).append(p.id)
    return out


def _toward(here, side, k):
    """Children among ``here`` heading in direction ``side`` (actions are named L/R)."""
    if k == 0:
        return [side] if side in here else []
    return [c for c in here if c.endswith(side)]


def factored_toy(M: int = 3, n: int = 2, accuracy: float = 0.8):
    """M independent counters with values 0..n-1 driven by shared actions up/down/hold.

    Each counter moves one step in the action's direction with probability
    0.7 (hold keeps it with 0.8) and is read by its own sensor that reports
    the true value with ``accuracy``. Level 1 has rise/fall policies that stop
    at the all-max / all-min corners; two top policies prefer one or the other.
    """
    from itertools import product

    from .factored import Component, FactoredHierarchy

    vals = tuple(str(i) for i in range(n))
    nbrs = {v: frozenset(str(j) for j in (i - 1, i + 1) if 0 <= j < n) for i, v in enumerate(vals)}

    def move(i, d, p):
        j = i + d
        if not 0 <= j < n:
            return {str(i): 1.0}
        return {str(j): p, str(i): round(1.0 - p, 12)}

    trans = {"up": {}, "down": {}, "hold": {}}
    for i, v in enumerate(vals):
        trans["up"][v] = move(i, 1, 0.7)
        trans["down"][v] = move(i, -1, 0.7)
        side = [str(j) for j in (i - 1, i + 1) if 0 <= j < n]
        trans["hold"][v] = {v: 0.8, **{x: 0.2 / len(side) for x in side}} if side else {v: 1.0}
    if n == 1:
        like = {"0": {"0": 1.0}}
    else:
        miss = (1.0 - accuracy) / (n - 1)
        like = {v: {o: accuracy if o == v else miss for o in vals} for v in vals}
    comps = tuple(Component(f"c{m}", vals, nbrs, trans, vals, like) for m in range(M))

    joint = list(product(vals, repeat=M))
    top_corner, low_corner = (vals[-1],) * M, (vals[0],) * M
    levels0 = tuple(PolicySpec(a, 0, frozenset(joint)) for a in ("up", "down", "hold"))

    def lvl1(pid, main, corner):
        sel = {}
        for s in joint:
            low = sum(int(x) for x in s) * 2 < M * (n - 1)
            w = 0.7 if (low == (main == "up")) else 0.5
            other = "down" if main == "up" else "up"
            sel[s] = {main: w, "hold": round(0.9 - w, 12), other: 0.1}
        return PolicySpec(pid, 1, frozenset(joint), {corner: 0.6}, sel)

    rise, fall = lvl1("rise", "up", top_corner), lvl1("fall", "down", low_corner)

    def top(pid, p_rise):
        sel = {s: {"rise": p_rise, "fall": round(1.0 - p_rise, 12)} for s in joint}
        return PolicySpec(pid, 2, frozenset(joint), {}, sel)

    levels = (levels0, (rise, fall), (top("climber", 0.8), top("sinker", 0.25)))
    return FactoredHierarchy(comps, ("up", "down", "hold"), levels)
