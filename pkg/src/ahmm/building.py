"""Procedural office-building scenario with rooms, wings and four entrances.

Layout: two rows of four g x g rooms. The top row is the north wing
(rooms n0..n3), the bottom row the south wing (s0..s3). Horizontally adjacent
rooms share a door at the middle of their common wall; door C joins n1 and s1.
Entrances W, N, S and E sit on n0, n2, s2 and s3 and lead to explicit outside
cells, which are the top-level destinations.
"""

from __future__ import annotations

from dataclasses import dataclass, field

from .hierarchy import (
    ActionModel,
    ObservationModel,
    PolicyHierarchy,
    PolicySpec,
    RegionPartition,
    StateSpace,
    action_policies,
    periphery,
)

MOVES = {"N": (0, -1), "E": (1, 0), "S": (0, 1), "W": (-1, 0)}
SIDES = ("N", "E", "S", "W")
WING_EXITS = {"n": ("W", "N", "C"), "s": ("C", "S", "E")}
ENTRANCE_ROOM = {"W": "n0", "N": "n2", "S": "s2", "E": "s3", "C": None}


@dataclass(frozen=True)
class BuildingConfig:
    grid_size: int = 5
    obs_stay_prob: float = 0.6  # Pr(o = true cell); the rest spread over 8-neighbours
    slip: float = 0.0  # Pr(move fails and the agent stays)
    level1_bias: float = 0.7
    upper_bias: float = 0.8
    initial: str = "entrances"  # or "uniform" over all room cells


@dataclass(frozen=True)
class BuildingScenario:
    hierarchy: PolicyHierarchy
    partition: RegionPartition
    entrances: dict  # X -> (outside cell, inside cell)
    initial: dict  # state -> probability
    coords: dict = field(repr=False)  # state -> (x, y)
    rooms: dict = field(repr=False)  # room -> frozenset of cells


def cell(x: int, y: int) -> str:
    return f"{x},{y}"


def build_building_scenario(cfg: BuildingConfig = BuildingConfig()) -> BuildingScenario:
    g = cfg.grid_size
    mid = g // 2
    W, H = 4 * g, 2 * g

    def room_of(x, y):
        return ("n" if y < g else "s") + str(x // g)

    coords = {cell(x, y): (x, y) for y in range(H) for x in range(W)}
    rooms: dict[str, set] = {}
    for c, (x, y) in coords.items():
        rooms.setdefault(room_of(x, y), set()).add(c)

    # door pairs between rooms, as unordered pairs of inside cells
    doors = set()
    for row in (0, 1):
        y = row * g + mid
        for col in range(3):
            doors.add(frozenset({cell(col * g + g - 1, y), cell((col + 1) * g, y)}))
    c_upper, c_lower = cell(g + mid, g - 1), cell(g + mid, g)
    doors.add(frozenset({c_upper, c_lower}))

    outside_xy = {"W": (-1, mid), "N": (2 * g + mid, -1), "S": (2 * g + mid, H), "E": (W, g + mid)}
    inside_xy = {"W": (0, mid), "N": (2 * g + mid, 0), "S": (2 * g + mid, H - 1), "E": (W - 1, g + mid)}
    entrances = {X: (X, cell(*inside_xy[X])) for X in outside_xy}
    for X, xy in outside_xy.items():
        coords[X] = xy
    by_xy = {xy: s for s, xy in coords.items()}

    # legal moves
    trans: dict[str, dict] = {a: {} for a in SIDES}
    nb: dict[str, frozenset] = {}
    for c, (x, y) in coords.items():
        if c in outside_xy:
            nb[c] = frozenset()
            continue
        reach = set()
        for a, (dx, dy) in MOVES.items():
            target = by_xy.get((x + dx, y + dy))
            if target is None:
                continue
            if target in outside_xy:
                ok = entrances[target][1] == c
            else:
                ok = room_of(*coords[target]) == room_of(x, y) or frozenset({c, target}) in doors
            if ok:
                reach.add(target)
                trans[a][c] = {target: 1.0} if cfg.slip == 0 else {target: 1.0 - cfg.slip, c: cfg.slip}
        nb[c] = frozenset(reach)

    states = tuple(sorted(coords, key=lambda s: (coords[s][1], coords[s][0])))
    space = StateSpace(states=states, neighbours=nb)
    actions = ActionModel(actions=SIDES, transition=trans)
    obs = _observation_model(states, coords, by_xy, cfg.obs_stay_prob)

    # room doors: (side, inside cell, outside cell across it)
    room_doors: dict[str, list] = {r: [] for r in rooms}
    for c in sorted(coords, key=lambda s: coords[s]):
        if c in outside_xy:
            continue
        for a in SIDES:
            target = trans[a].get(c)
            if target is None:
                continue
            dest = next(iter(d for d in target if d != c))
            if dest in outside_xy or room_of(*coords[dest]) != room_of(*coords[c]):
                room_doors[room_of(*coords[c])].append((a, c, dest))

    level1 = []
    l1_target: dict[str, str] = {}  # policy id -> outside cell of its target door
    for r in sorted(rooms):
        cells = rooms[r]
        xs = sorted({coords[c][0] for c in cells})
        ys = sorted({coords[c][1] for c in cells})
        wall_mid = {
            "N": (xs[0] + mid, ys[0]),
            "S": (xs[0] + mid, ys[-1]),
            "W": (xs[0], ys[0] + mid),
            "E": (xs[-1], ys[0] + mid),
        }
        per = periphery(frozenset(cells), space)
        ordered = sorted(room_doors[r], key=lambda d: SIDES.index(d[0]))
        for side in SIDES:
            on_side = [d for d in ordered if d[0] == side]
            if on_side:
                door = on_side[0]
            else:
                mx, my = wall_mid[side]
                door = min(ordered, key=lambda d: abs(coords[d[1]][0] - mx) + abs(coords[d[1]][1] - my))
            pid = f"{r}-{side}"
            l1_target[pid] = door[2]
            tx, ty = coords[door[2]]
            select = {}
            for c in cells:
                legal = [a for a in SIDES if c in trans[a]]
                x, y = coords[c]
                d0 = abs(x - tx) + abs(y - ty)
                good = []
                for a in legal:
                    nx, ny = coords[next(iter(s for s in trans[a][c] if s != c))]
                    if abs(nx - tx) + abs(ny - ty) < d0:
                        good.append(a)
                select[c] = biased_split(legal, good, cfg.level1_bias)
            level1.append(
                PolicySpec(
                    id=pid, level=1, applicable=frozenset(cells), stop_prob={d: 1.0 for d in per}, select=select
                )
            )

    wings = {w: frozenset(c for r in rooms if r[0] == w for c in rooms[r]) for w in "ns"}
    exit_cell = {"W": "W", "N": "N", "S": "S", "E": "E"}
    level2 = []
    for w, exits in WING_EXITS.items():
        per = periphery(wings[w], space)
        for X in exits:
            if X == "C":
                goal_room = "n1" if w == "n" else "s1"
                goal_cell = c_lower if w == "n" else c_upper
            else:
                goal_room = ENTRANCE_ROOM[X]
                goal_cell = exit_cell[X]
            select = {}
            for r in (r for r in sorted(rooms) if r[0] == w):
                col, gcol = int(r[1]), int(goal_room[1])
                if col == gcol:
                    want = goal_cell
                else:
                    step = 1 if gcol > col else -1
                    want = next(
                        d[2]
                        for d in room_doors[r]
                        if d[2] not in outside_xy and room_of(*coords[d[2]]) == f"{w}{col + step}"
                    )
                kids = [p.id for p in level1 if p.id.startswith(r + "-")]
                good = [k for k in kids if l1_target[k] == want]
                for c in rooms[r]:
                    select[c] = biased_split(kids, good, cfg.upper_bias)
            level2.append(
                PolicySpec(
                    id=f"{w}-exit-{X}", level=2, applicable=wings[w], stop_prob={d: 1.0 for d in per}, select=select
                )
            )

    inside = frozenset(c for c in coords if c not in outside_xy)
    level3 = []
    for X in ("N", "W", "S", "E"):
        select = {}
        for w, exits in WING_EXITS.items():
            kids = [f"{w}-exit-{e}" for e in exits]
            want = f"{w}-exit-{X}" if X in exits else f"{w}-exit-C"
            for c in wings[w]:
                select[c] = biased_split(kids, [want], cfg.upper_bias)
        level3.append(
            PolicySpec(
                id=f"exit-{X}", level=3, applicable=inside, stop_prob={e: 1.0 for e in outside_xy}, select=select
            )
        )

    h = PolicyHierarchy(
        state_space=space,
        action_model=actions,
        observation_model=obs,
        levels=(action_policies(actions), tuple(level1), tuple(level2), tuple(level3)),
    )
    singles = tuple(frozenset({X}) for X in ("W", "N", "S", "E"))
    partition = RegionPartition(
        partitions=(
            tuple(frozenset(rooms[r]) for r in sorted(rooms)) + singles,
            (wings["n"], wings["s"]) + singles,
            (frozenset(states),),
        )
    )
    if cfg.initial == "uniform":
        initial = {c: 1.0 / len(inside) for c in sorted(inside)}
    else:
        initial = {entrances[X][1]: 0.25 for X in ("W", "N", "S", "E")}
    return BuildingScenario(
        hierarchy=h,
        partition=partition,
        entrances=entrances,
        initial=initial,
        coords=coords,
        rooms={r: frozenset(v) for r, v in rooms.items()},
    )


def biased_split(children, preferred, bias):
    """``bias`` shared by ``preferred`` children, the remainder uniform over the others."""
    others = [c for c in children if c not in preferred]
    if not preferred or not others:
        return {c: 1.0 / len(children) for c in children}
    d = {c: bias / len(preferred) for c in preferred}
    d.update({c: (1.0 - bias) / len(others) for c in others})
    return d


def _observation_model(states, coords, by_xy, p0):
    likelihood = {}
    for s in states:
        x, y = coords[s]
        around = [
            by_xy[(x + dx, y + dy)]
            for dy in (-1, 0, 1)
            for dx in (-1, 0, 1)
            if (dx or dy) and (x + dx, y + dy) in by_xy
        ]
        if around:
            row = {s: p0}
            row.update({n: (1.0 - p0) / len(around) for n in around})
        else:
            row = {s: 1.0}
        likelihood[s] = row
    return ObservationModel(symbols=states, likelihood=likelihood)


def build_two_room_slice(g: int = 3, level1_bias: float = 0.7, upper_bias: float = 0.8, obs_stay_prob: float | None = None):
    """Two g x g rooms side by side (a | b) with exits W and E: a K=2 cut of the building.

    Level 1 has one exit policy per door of each room, level 2 the two
    leave-W / leave-E policies. Observations are the identity unless
    ``obs_stay_prob`` is given, which switches on the 8-neighbour noise.
    """
    mid = g // 2
    coords = {cell(x, y): (x, y) for y in range(g) for x in range(2 * g)}
    coords["W"], coords["E"] = (-1, mid), (2 * g, mid)
    by_xy = {xy: s for s, xy in coords.items()}
    rooms = {"a": frozenset(cell(x, y) for y in range(g) for x in range(g))}
    rooms["b"] = frozenset(cell(x, y) for y in range(g) for x in range(g, 2 * g))
    door = frozenset({cell(g - 1, mid), cell(g, mid)})
    gates = {"W": cell(0, mid), "E": cell(2 * g - 1, mid)}

    def room_of(s):
        return "a" if s in rooms["a"] else "b" if s in rooms["b"] else None

    trans: dict[str, dict] = {a: {} for a in SIDES}
    nb = {}
    for c, (x, y) in coords.items():
        reach = set()
        if room_of(c) is not None:
            for a, (dx, dy) in MOVES.items():
                t = by_xy.get((x + dx, y + dy))
                if t is None:
                    continue
                ok = gates.get(t) == c if t in gates else room_of(t) == room_of(c) or frozenset({c, t}) in door
                if ok:
                    reach.add(t)
                    trans[a][c] = {t: 1.0}
        nb[c] = frozenset(reach)
    states = tuple(sorted(coords, key=lambda s: (coords[s][1], coords[s][0])))
    space = StateSpace(states, nb)
    actions = ActionModel(SIDES, trans)
    if obs_stay_prob is None:
        obs = ObservationModel(states, {s: {s: 1.0} for s in states})
    else:
        obs = _observation_model(states, coords, by_xy, obs_stay_prob)

    targets = {"a-W": "W", "a-E": cell(g, mid), "b-W": cell(g - 1, mid), "b-E": "E"}
    level1 = []
    for pid, goal in targets.items():
        cells = rooms[pid[0]]
        tx, ty = coords[goal]
        select = {}
        for c in cells:
            x, y = coords[c]
            legal = [a for a in SIDES if c in trans[a]]
            good = []
            for a in legal:
                nx, ny = coords[next(iter(trans[a][c]))]
                if abs(nx - tx) + abs(ny - ty) < abs(x - tx) + abs(y - ty):
                    good.append(a)
            select[c] = biased_split(legal, good, level1_bias)
        per = periphery(cells, space)
        level1.append(PolicySpec(pid, 1, cells, {d: 1.0 for d in per}, select))
    inside = rooms["a"] | rooms["b"]
    level2 = []
    for X in ("W", "E"):
        select = {c: biased_split([f"{room_of(c)}-W", f"{room_of(c)}-E"], [f"{room_of(c)}-{X}"], upper_bias) for c in inside}
        level2.append(PolicySpec(f"leave-{X}", 2, inside, {"W": 1.0, "E": 1.0}, select))
    h = PolicyHierarchy(space, actions, obs, (action_policies(actions), tuple(level1), tuple(level2)))
    partition = RegionPartition(
        partitions=((rooms["a"], rooms["b"], frozenset({"W"}), frozenset({"E"})), (frozenset(states),))
    )
    return BuildingScenario(
        hierarchy=h,
        partition=partition,
        entrances={X: (X, gates[X]) for X in gates},
        initial={gates["W"]: 0.5, gates["E"]: 0.5},
        coords=coords,
        rooms=rooms,
    )
