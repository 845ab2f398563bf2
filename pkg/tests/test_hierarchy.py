from dataclasses import replace

import pytest

from ahmm.building import BuildingConfig, build_building_scenario
from ahmm.errors import InputError
from ahmm.factored import flatten
from ahmm.fixtures import factored_toy, line_family, t4
from ahmm.hierarchy import (
    ACTION_MISMATCH,
    BAD_PROBABILITY,
    CHILD_NOT_APPLICABLE,
    CONTAINMENT,
    DUPLICATE_ID,
    EXTERIOR_DESTINATION,
    MISSING_OBSERVATION,
    MISSING_SELECTION,
    NOT_NORMALIZED,
    TRANSITION_SUPPORT,
    UNCOVERED_EXIT,
    UNKNOWN_CHILD,
    UNKNOWN_STATE,
    ActionModel,
    ObservationModel,
    RegionPartition,
    applicable_policies,
    periphery,
    srd_termination,
    validate_hierarchy,
)
from ahmm.simulator import simulate


def _kinds(h):
    return {v.kind for v in validate_hierarchy(h)}


def _swap(h, k, pid, **changes):
    lvl = tuple(replace(p, **changes) if p.id == pid else p for p in h.levels[k])
    return replace(h, levels=h.levels[:k] + (lvl,) + h.levels[k + 1 :])


@pytest.mark.parametrize(
    "make",
    [
        lambda: t4(),
        lambda: t4(move_prob=1.0, noisy=False),
        lambda: build_building_scenario().hierarchy,
        lambda: build_building_scenario(BuildingConfig(grid_size=3, slip=0.2, initial="uniform")).hierarchy,
        lambda: line_family(3)[0],
        lambda: line_family(6, length=200)[0],
        lambda: flatten(factored_toy(2, 3)),
    ],
)
def test_fixtures_are_valid(make):
    assert validate_hierarchy(make()) == []


def test_two_room_is_valid(two_room):
    assert validate_hierarchy(two_room.hierarchy) == []
    assert two_room.partition.check(two_room.hierarchy.state_space.states) == []


def test_unnormalized_selection():
    h = t4()
    bad = _swap(h, 1, "go-left", select={s: {"L": 0.8, "stay": 0.3} for s in ("1", "2", "3")})
    assert NOT_NORMALIZED in _kinds(bad)


def test_probability_out_of_range():
    h = t4()
    assert BAD_PROBABILITY in _kinds(_swap(h, 1, "go-left", stop_prob={"0": 1.5, "1": 0.3}))
    assert BAD_PROBABILITY in _kinds(_swap(h, 1, "go-left", select={s: {"L": 1.2, "stay": -0.2} for s in "123"}))


def test_exterior_destination_must_terminate():
    h = t4()
    assert EXTERIOR_DESTINATION in _kinds(_swap(h, 1, "go-left", stop_prob={"0": 0.5, "1": 0.3}))


def test_unknown_and_inapplicable_children():
    h = t4()
    sel = {s: {"L": 0.8, "fly": 0.2} for s in "123"}
    assert UNKNOWN_CHILD in _kinds(_swap(h, 1, "go-left", select=sel))
    # go-right is not applicable at state 3
    sel = {"0": {"go-right": 1.0}, "1": {"go-left": 0.5, "go-right": 0.5}, "2": {"go-left": 0.5, "go-right": 0.5}, "3": {"go-right": 1.0}}
    assert CHILD_NOT_APPLICABLE in _kinds(_swap(h, 2, "A", select=sel))


def test_missing_selection():
    h = t4()
    sel = {s: {"L": 0.8, "stay": 0.2} for s in ("1", "2")}
    assert MISSING_SELECTION in _kinds(_swap(h, 1, "go-left", select=sel))


def test_transition_outside_neighbours():
    h = t4()
    trans = {a: dict(per) for a, per in h.action_model.transition.items()}
    trans["R"]["0"] = {"2": 1.0}
    bad = replace(h, action_model=ActionModel(h.action_model.actions, trans))
    assert TRANSITION_SUPPORT in _kinds(bad)


def test_containment_and_unknown_state():
    h = t4()
    assert CONTAINMENT in _kinds(_swap(h, 1, "go-left", applicable=frozenset({"1", "2", "3", "x"})))
    assert UNKNOWN_STATE in _kinds(_swap(h, 1, "go-left", stop_prob={"0": 1.0, "x": 1.0}))


def test_level_zero_must_match_actions_and_ids_unique():
    h = t4()
    assert ACTION_MISMATCH in _kinds(replace(h, levels=(h.levels[0][:2],) + h.levels[1:]))
    dup = replace(h, levels=h.levels[:2] + (h.levels[2] + h.levels[2][:1],))
    assert DUPLICATE_ID in _kinds(dup)


def test_missing_observation_row():
    h = t4()
    like = dict(h.observation_model.likelihood)
    del like["2"]
    assert MISSING_OBSERVATION in _kinds(replace(h, observation_model=ObservationModel(h.observation_model.symbols, like)))


def test_exit_not_covered_by_destinations():
    h, _ = line_family(3)
    # drop the right-hand exit cell of one level-1 region
    p = h.policy(1, "L1[2-3]L")
    stop = {d: b for d, b in p.stop_prob.items() if d != "4"}
    bad = _swap(h, 1, p.id, stop_prob=stop)
    found = [v for v in validate_hierarchy(bad) if v.kind == UNCOVERED_EXIT]
    assert found and found[0].policy == p.id and found[0].state == "4"


def test_applicable_policies(t4_h):
    assert applicable_policies(t4_h, 1, "0") == {"go-right"}
    assert applicable_policies(t4_h, 1, "2") == {"go-left", "go-right"}
    assert applicable_policies(t4_h, 0, "0") == {"R", "stay"}
    with pytest.raises(InputError):
        applicable_policies(t4_h, 3, "0")
    with pytest.raises(InputError):
        applicable_policies(t4_h, 1, "q")


def test_region_partition_checks():
    states = ["a", "b", "c", "d"]
    good = RegionPartition(((frozenset("ab"), frozenset("cd")), (frozenset("abcd"),)))
    assert good.check(states) == []
    assert good.region_of(1, "c") == frozenset("cd")
    overlap = RegionPartition(((frozenset("abc"), frozenset("cd")), (frozenset("abcd"),)))
    assert any("overlap" in p for p in overlap.check(states))
    nest = RegionPartition(((frozenset("ab"), frozenset("cd")), (frozenset("ac"), frozenset("bd")), (frozenset("abcd"),)))
    assert any("nested" in p for p in nest.check(states))
    top = RegionPartition(((frozenset("ab"), frozenset("cd")),))
    assert any("single region" in p for p in top.check(states))


def test_srd_termination_and_periphery():
    p = RegionPartition(((frozenset("ab"), frozenset("cd")), (frozenset("abcd"),)))
    assert srd_termination(p, "a", "b") == 0
    assert srd_termination(p, "b", "c") == 1
    with pytest.raises(InputError):
        srd_termination(p, "a", "z")
    from ahmm.hierarchy import StateSpace

    space = StateSpace(tuple("abcd"), {"a": frozenset("b"), "b": frozenset("ac"), "c": frozenset("bd"), "d": frozenset("c")})
    assert periphery(frozenset("ab"), space) == frozenset("c")


def test_building_structure(building):
    h = building.hierarchy
    assert h.K == 3
    assert len(h.levels[1]) == 32
    assert len(h.levels[2]) == 6 and len(h.levels[3]) == 4
    assert building.partition.check(h.state_space.states) == []
    assert set(building.entrances) == {"W", "N", "S", "E"}
    assert abs(sum(building.initial.values()) - 1.0) < 1e-12
    # every room cell is inside exactly one level-1 region of 25 cells
    rooms = building.partition.partitions[0]
    assert sum(1 for r in rooms if len(r) == 25) == 8


def test_building_termination_is_srd(building):
    """On the building, the simulated termination level equals the region-crossing level."""
    h = building.hierarchy
    checked = 0
    for seed in range(20):
        for X in ("W", "N", "S", "E"):
            top = f"exit-{'E' if X == 'W' else 'W'}"
            tr = simulate(h, top, building.entrances[X][1], 300, seed)
            prev = building.entrances[X][1]
            for st in tr.steps:
                if st.l < h.K:
                    assert srd_termination(building.partition, prev, st.s) == st.l
                    checked += 1
                prev = st.s
    assert checked > 1000
