import json

import pytest

from ahmm.errors import ParseError
from ahmm.factored import FactoredHierarchy
from ahmm.fixtures import factored_toy, t4
from ahmm.serialization import (
    hierarchy_from_dict,
    hierarchy_to_dict,
    load_hierarchy,
    parse_observation_line,
    read_observations,
    read_trajectory,
    save_hierarchy,
    write_observations,
    write_trajectory,
)
from ahmm.simulator import simulate


def _same(a, b):
    assert a.state_space == b.state_space
    assert a.action_model.actions == b.action_model.actions
    assert {k: dict(v) for k, v in a.action_model.transition.items()} == {
        k: dict(v) for k, v in b.action_model.transition.items()
    }
    assert dict(a.observation_model.likelihood) == dict(b.observation_model.likelihood)
    for la, lb in zip(a.levels, b.levels):
        assert [(p.id, p.applicable, dict(p.stop_prob), {s: dict(d) for s, d in p.select.items()}) for p in la] == [
            (p.id, p.applicable, dict(p.stop_prob), {s: dict(d) for s, d in p.select.items()}) for p in lb
        ]


def test_round_trip_t4(tmp_path):
    h = t4()
    save_hierarchy(h, tmp_path / "t4.json")
    _same(h, load_hierarchy(tmp_path / "t4.json"))


def test_round_trip_building(tmp_path, building_slip):
    h = building_slip.hierarchy
    save_hierarchy(h, tmp_path / "b.json")
    back = load_hierarchy(tmp_path / "b.json")
    _same(h, back)
    # saving again is byte-identical
    save_hierarchy(back, tmp_path / "b2.json")
    assert (tmp_path / "b.json").read_bytes() == (tmp_path / "b2.json").read_bytes()


def test_round_trip_factored(tmp_path):
    fh = factored_toy(3, 2)
    save_hierarchy(fh, tmp_path / "f.json")
    back = load_hierarchy(tmp_path / "f.json")
    assert isinstance(back, FactoredHierarchy)
    assert back.components == fh.components
    assert [[p.id for p in lvl] for lvl in back.levels] == [[p.id for p in lvl] for lvl in fh.levels]
    a, b = fh.compiled, back.compiled
    assert a.beta == b.beta and a.select_row == b.select_row


def _doc():
    return hierarchy_to_dict(t4())


def test_probability_out_of_range():
    d = _doc()
    d["levels"][1]["policies"][0]["beta"]["0"] = 1.5
    with pytest.raises(ParseError, match="probability out of range"):
        hierarchy_from_dict(d)


def test_unknown_ids_are_named():
    d = _doc()
    d["levels"][2]["policies"][0]["select"]["1"] = {"go-up": 1.0}
    with pytest.raises(ParseError, match=r"levels\[2\].*go-up"):
        hierarchy_from_dict(d)
    d = _doc()
    d["actions"]["transition"]["L"]["1"] = {"9": 1.0}
    with pytest.raises(ParseError, match="unknown state '9'"):
        hierarchy_from_dict(d)


def test_float_dust_is_renormalized():
    d = _doc()
    d["levels"][1]["policies"][0]["select"]["1"] = {"L": 0.8 + 5e-8, "stay": 0.2}
    h = hierarchy_from_dict(d)
    row = h.policy(1, "go-left").select["1"]
    assert abs(sum(row.values()) - 1.0) < 1e-15


def test_unnormalized_rows_strict_and_lenient():
    d = _doc()
    d["levels"][1]["policies"][0]["select"]["1"] = {"L": 0.5, "stay": 0.2}
    with pytest.raises(ParseError, match="not normalized"):
        hierarchy_from_dict(d)
    h = hierarchy_from_dict(d, strict=False)
    from ahmm.hierarchy import NOT_NORMALIZED, validate_hierarchy

    assert NOT_NORMALIZED in {v.kind for v in validate_hierarchy(h)}


def test_decimal_strings_accepted():
    d = _doc()
    d["levels"][1]["policies"][0]["select"]["1"] = {"L": "0.8", "stay": "0.2"}
    assert hierarchy_from_dict(d).policy(1, "go-left").select["1"]["L"] == 0.8


def test_syntax_error_reports_position(tmp_path):
    p = tmp_path / "bad.json"
    p.write_text('{"format": "ahmm-hierarchy/1",\n "states": [\n}')
    with pytest.raises(ParseError, match="line 3"):
        load_hierarchy(p)


def test_level_zero_must_list_actions():
    d = _doc()
    d["levels"][0]["policies"] = [{"id": "R"}, {"id": "L"}, {"id": "stay"}]
    with pytest.raises(ParseError, match="levels\\[0\\]"):
        hierarchy_from_dict(d)


def test_wrong_format_rejected():
    d = _doc()
    d["format"] = "something-else/2"
    with pytest.raises(ParseError, match="unsupported format"):
        hierarchy_from_dict(d)


def test_trajectory_round_trip(tmp_path, t4_h):
    tr = simulate(t4_h, "B", "2", 25, 4)
    write_trajectory(tr, tmp_path / "tr.tsv")
    back = read_trajectory(tmp_path / "tr.tsv")
    assert back == tr
    write_observations(tr, tmp_path / "obs.tsv")
    assert read_observations(tmp_path / "obs.tsv") == [x.o for x in tr.steps]


def test_observation_lines():
    assert parse_observation_line("3\thi") == "hi"
    assert parse_observation_line("lo\n") == "lo"
    assert parse_observation_line("   ") is None
    assert parse_observation_line("# comment") is None
    with pytest.raises(ParseError):
        parse_observation_line("x hi")
    with pytest.raises(ParseError):
        parse_observation_line("1 2 3")


def test_bad_trajectory_line(tmp_path):
    p = tmp_path / "tr.tsv"
    p.write_text("# top=A seed=1 s0=1 done=false\n1\t2\thi\n")
    with pytest.raises(ParseError, match="line 2"):
        read_trajectory(p)


def test_saved_document_is_plain_json(tmp_path):
    save_hierarchy(t4(), tmp_path / "t4.json")
    doc = json.loads((tmp_path / "t4.json").read_text())
    assert doc["format"] == "ahmm-hierarchy/1"
    assert [p["id"] for p in doc["levels"][2]["policies"]] == ["A", "B"]
