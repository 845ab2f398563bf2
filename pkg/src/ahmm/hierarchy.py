"""Domain types for policy hierarchies, their validation and region partitions.

A hierarchy has levels 0..K. Level 0 holds the primitive actions, whose
dynamics live in :class:`ActionModel`. A policy at level k >= 1 is the tuple
(applicable states S, stopping probabilities beta over destinations D,
selection over level k-1 children).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property
from typing import Mapping

from .errors import InputError

TOL = 1e-9

# violation kinds
NOT_NORMALIZED = "distribution not normalized"
EXTERIOR_DESTINATION = "non-terminal exterior destination"
BAD_PROBABILITY = "probability out of range"
UNKNOWN_STATE = "unknown state"
UNKNOWN_CHILD = "unknown child policy"
CHILD_NOT_APPLICABLE = "child not applicable"
MISSING_SELECTION = "missing selection"
NO_APPLICABLE_CHILD = "no applicable child"
TRANSITION_SUPPORT = "transition outside neighbours"
EMPTY_NEIGHBOURS = "empty neighbour set"
CONTAINMENT = "containment violated"
DUPLICATE_ID = "duplicate policy id"
ACTION_MISMATCH = "level 0 does not match action set"
MISSING_OBSERVATION = "missing observation row"
UNCOVERED_EXIT = "exit not in destinations"


@dataclass(frozen=True)
class StateSpace:
    states: tuple[str, ...]
    neighbours: Mapping[str, frozenset[str]]


@dataclass(frozen=True)
class ActionModel:
    """transition[a][s][s2] = sigma_a(s, s2). A missing (a, s) entry means a is not applicable at s."""

    actions: tuple[str, ...]
    transition: Mapping[str, Mapping[str, Mapping[str, float]]]


@dataclass(frozen=True)
class ObservationModel:
    symbols: tuple[str, ...]
    likelihood: Mapping[str, Mapping[str, float]]


@dataclass(frozen=True)
class PolicySpec:
    """One policy. ``stop_prob`` maps each destination to beta; ``select`` maps s to a child distribution."""

    id: str
    level: int
    applicable: frozenset[str]
    stop_prob: Mapping[str, float] = field(default_factory=dict)
    select: Mapping[str, Mapping[str, float]] = field(default_factory=dict)

    @property
    def destinations(self) -> frozenset[str]:
        return frozenset(self.stop_prob)


@dataclass(frozen=True)
class Violation:
    kind: str
    policy: str | None
    state: str | None
    detail: str = ""

    def __str__(self) -> str:
        where = ", ".join(x for x in (self.policy and f"policy {self.policy}", self.state and f"state {self.state}") if x)
        return f"{self.kind} ({where}) {self.detail}".strip()


@dataclass(frozen=True)
class PolicyHierarchy:
    state_space: StateSpace
    action_model: ActionModel
    observation_model: ObservationModel
    levels: tuple[tuple[PolicySpec, ...], ...]

    @property
    def K(self) -> int:
        return len(self.levels) - 1

    def policy(self, k: int, pid: str) -> PolicySpec:
        for p in self.levels[k]:
            if p.id == pid:
                return p
        raise InputError(f"unknown policy {pid!r} at level {k}")

    def ids(self, k: int) -> tuple[str, ...]:
        return tuple(p.id for p in self.levels[k])

    @cached_property
    def compiled(self):
        from .compiled import CompiledHierarchy

        return CompiledHierarchy(self)


def action_policies(actions: ActionModel) -> tuple[PolicySpec, ...]:
    """Level-0 policy specs derived from the action model."""
    return tuple(
        PolicySpec(id=a, level=0, applicable=frozenset(actions.transition.get(a, {})))
        for a in actions.actions
    )


def applicable_policies(h: PolicyHierarchy, k: int, s: str) -> frozenset[str]:
    """Ids of the level-k policies whose applicable set contains s."""
    if not 0 <= k <= h.K:
        raise InputError(f"level {k} outside 0..{h.K}")
    if s not in h.state_space.neighbours:
        raise InputError(f"unknown state {s!r}")
    return frozenset(p.id for p in h.levels[k] if s in p.applicable)


def _check_dist(dist, legal, out, kind_ctx):
    """Range and normalization checks; returns keys outside ``legal``."""
    pid, s = kind_ctx
    bad = False
    for key, v in dist.items():
        if not 0.0 <= v <= 1.0:
            out.append(Violation(BAD_PROBABILITY, pid, s, f"{key}={v}"))
            bad = True
    if not bad and abs(sum(dist.values()) - 1.0) > TOL:
        out.append(Violation(NOT_NORMALIZED, pid, s, f"sum={sum(dist.values())!r}"))
    return [key for key in dist if legal is not None and key not in legal]


def validate_hierarchy(h: PolicyHierarchy) -> list[Violation]:
    """Return every invariant violation; an empty list means the hierarchy is valid."""
    out: list[Violation] = []
    states = set(h.state_space.states)
    nb = h.state_space.neighbours

    for s in h.state_space.states:
        extra = set(nb.get(s, ())) - states
        if extra:
            out.append(Violation(UNKNOWN_STATE, None, s, f"neighbours {sorted(extra)}"))

    am = h.action_model
    for a, table in am.transition.items():
        for s, dist in table.items():
            if s not in states:
                out.append(Violation(UNKNOWN_STATE, a, s))
                continue
            legal = set(nb.get(s, ())) | {s}
            for s2 in _check_dist(dist, legal, out, (a, s)):
                out.append(Violation(TRANSITION_SUPPORT, a, s, f"-> {s2}"))

    om = h.observation_model
    symbols = set(om.symbols)
    for s in h.state_space.states:
        row = om.likelihood.get(s)
        if row is None:
            out.append(Violation(MISSING_OBSERVATION, None, s))
            continue
        for o in _check_dist(row, symbols, out, (None, s)):
            out.append(Violation(UNKNOWN_STATE, None, s, f"unknown symbol {o}"))

    if tuple(p.id for p in h.levels[0]) != tuple(am.actions):
        out.append(Violation(ACTION_MISMATCH, None, None))

    for k, level in enumerate(h.levels):
        seen = set()
        for p in level:
            if p.id in seen:
                out.append(Violation(DUPLICATE_ID, p.id, None, f"level {k}"))
            seen.add(p.id)

    used_states: set[str] = set()
    for k in range(1, h.K + 1):
        children = {p.id: p for p in h.levels[k - 1]}
        child_S = set().union(*(p.applicable for p in h.levels[k - 1])) if children else set()
        child_D = set().union(*(p.destinations for p in h.levels[k - 1])) if children else set()
        for p in h.levels[k]:
            used_states |= p.applicable
            for s in p.applicable - states:
                out.append(Violation(UNKNOWN_STATE, p.id, s, "applicable"))
            for d, b in p.stop_prob.items():
                if d not in states:
                    out.append(Violation(UNKNOWN_STATE, p.id, d, "destination"))
                elif not 0.0 < b <= 1.0:
                    out.append(Violation(BAD_PROBABILITY, p.id, d, f"beta={b}"))
                elif d not in p.applicable and b != 1.0:
                    out.append(Violation(EXTERIOR_DESTINATION, p.id, d, f"beta={b}"))
            if not p.applicable <= child_S:
                out.append(Violation(CONTAINMENT, p.id, None, "S not covered by children"))
            if k >= 2 and not p.destinations <= child_D:
                out.append(Violation(CONTAINMENT, p.id, None, "D not covered by children"))
            for s in sorted(p.applicable & states):
                here = {c.id for c in h.levels[k - 1] if s in c.applicable}
                if not here:
                    out.append(Violation(NO_APPLICABLE_CHILD, p.id, s))
                    continue
                dist = p.select.get(s)
                if dist is None:
                    out.append(Violation(MISSING_SELECTION, p.id, s))
                    continue
                _check_dist(dist, None, out, (p.id, s))
                for c in dist:
                    if c not in children:
                        out.append(Violation(UNKNOWN_CHILD, p.id, s, c))
                    elif c not in here and dist[c] > 0:
                        out.append(Violation(CHILD_NOT_APPLICABLE, p.id, s, c))
            for s in set(p.select) - p.applicable:
                out.append(Violation(UNKNOWN_STATE, p.id, s, "selection outside S"))
            # wherever a selected child can end up, p must either still apply or stop for sure
            exits = set()
            for s, dist in p.select.items():
                for c, v in dist.items():
                    if v <= 0 or c not in children:
                        continue
                    if k == 1:
                        exits |= set(am.transition.get(c, {}).get(s, {}))
                    else:
                        exits |= children[c].destinations
            for x in sorted(exits - p.applicable - p.destinations):
                out.append(Violation(UNCOVERED_EXIT, p.id, x))

    for s in sorted(used_states & states):
        if not nb.get(s):
            out.append(Violation(EMPTY_NEIGHBOURS, None, s))
    return out


@dataclass(frozen=True)
class RegionPartition:
    """Partitions P_1..P_K of the state set; P_K must be the single region {S}."""

    partitions: tuple[tuple[frozenset[str], ...], ...]

    @property
    def K(self) -> int:
        return len(self.partitions)

    @cached_property
    def _index(self) -> list[dict[str, int]]:
        return [{s: i for i, r in enumerate(part) for s in r} for part in self.partitions]

    def region_of(self, k: int, s: str) -> frozenset[str]:
        return self.partitions[k - 1][self._index[k - 1][s]]

    def check(self, states) -> list[str]:
        """Problems with coverage, disjointness and nesting (empty when valid)."""
        problems = []
        states = set(states)
        for k, part in enumerate(self.partitions, start=1):
            allr = [s for r in part for s in r]
            if len(allr) != len(set(allr)):
                problems.append(f"P_{k} regions overlap")
            if set(allr) != states:
                problems.append(f"P_{k} does not cover the state set")
            if k < self.K:
                for r in part:
                    if not any(r <= big for big in self.partitions[k]):
                        problems.append(f"P_{k} region not nested in P_{k + 1}")
                        break
        if self.partitions and len(self.partitions[-1]) != 1:
            problems.append("top partition must be a single region")
        return problems


def periphery(region: frozenset[str], space: StateSpace) -> frozenset[str]:
    """Per(R): states outside R reachable in one step from inside R."""
    return frozenset(n for s in region for n in space.neighbours.get(s, ()) if n not in region)


def srd_termination(p: RegionPartition, s_prev: str, s_now: str) -> int:
    """Largest k such that s_prev and s_now lie in different P_k regions (0 if none)."""
    idx = p._index
    for k in range(p.K, 0, -1):
        try:
            if idx[k - 1][s_prev] != idx[k - 1][s_now]:
                return k
        except KeyError as exc:
            raise InputError(f"unknown state {exc.args[0]!r}") from None
    return 0
