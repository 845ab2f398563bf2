import csv
import io
import json
import math

import pytest

from ahmm.errors import InputError, ParseError
from ahmm.fixtures import factored_toy, t4
from ahmm.harness import (
    ExperimentConfig,
    ProfilePoint,
    exact_run,
    linear_fit,
    loglog_fit,
    make_filter,
    make_fixture,
    make_scenario,
    profile_fits,
    r_squared,
    run_experiment,
    run_records,
    stream_filter,
)
from ahmm.oracle import conditioned_marginals
from ahmm.particles import run_filter
from ahmm.serialization import save_hierarchy

from conftest import uniform_top


def test_config_validation():
    with pytest.raises(InputError):
        ExperimentConfig(repeats=1)
    with pytest.raises(InputError):
        ExperimentConfig(filters=("bogus",))
    with pytest.raises(InputError):
        ExperimentConfig(sizes=(0, 10))
    with pytest.raises(InputError):
        ExperimentConfig.from_dict({"reps": 4})
    cfg = ExperimentConfig.from_dict({"sizes": [10, 20], "filters": ["sis"]})
    assert cfg.sizes == (10, 20) and cfg.filters == ("sis",)


def test_fits_recover_known_curves():
    N = [100, 300, 1000, 3000]
    b, c, r2 = loglog_fit(N, [0.5 / math.sqrt(n) for n in N])
    assert abs(b + 0.5) < 1e-12 and abs(c - 0.5) < 1e-12 and abs(r2 - 1.0) < 1e-12
    slope, icept, r2 = linear_fit(N, [2e-6 * n + 1e-4 for n in N])
    assert abs(slope - 2e-6) < 1e-15 and abs(icept - 1e-4) < 1e-12 and r2 > 1 - 1e-12
    assert r_squared([1.0, 2.0, 3.0], [2.0, 2.0, 2.0]) == 0.0


def test_profile_fits_eta_spread():
    pts = [ProfilePoint("rb_sis", n, 10, 0, 0.5, 0.1 / math.sqrt(n), 1e-6 * n, (0.01 / n) * 1e-6 * n, 0.1) for n in (100, 1000)]
    fit = profile_fits(pts)
    assert abs(fit["exponent"] + 0.5) < 1e-9
    assert abs(fit["eta_spread"] - 1.0) < 1e-9
    assert abs(fit["t_slope"] - 1e-6) < 1e-15


def test_scenario_is_frozen():
    cfg = ExperimentConfig(horizon=12)
    a, b = make_scenario(cfg), make_scenario(cfg)
    assert a.observations == b.observations and len(a.observations) == 12
    assert a.model.pids[a.model.K][a.truth] == "exit-E"
    with pytest.raises(InputError):
        make_scenario(ExperimentConfig(start="Q"))
    with pytest.raises(InputError):
        make_scenario(ExperimentConfig(scenario="maze"))


def test_exact_run_matches_oracle(t4_model):
    prior = uniform_top(t4_model, 1)
    cond = conditioned_marginals(t4_model, prior, 1, 3)
    for prefix, entry in list(cond.items())[:40]:
        got = exact_run(t4_model, 1, prefix, 2)
        assert max(abs(got[p] - entry["predicted"][2].get(p, 0.0)) for p in range(2)) < 1e-12


def _rows(path):
    with open(path) as f:
        return list(csv.DictReader(f))


def test_small_experiment(tmp_path):
    cfg = ExperimentConfig(
        scenario="t4", filters=("rb_sis", "sis", "exact"), sizes=(50, 200), repeats=4, top="A", horizon=5,
        csv=str(tmp_path / "p.csv"), trace_csv=str(tmp_path / "tr.csv"),
    )
    table = run_experiment(cfg)
    assert len(table.points) == 6
    exact = table.by_filter("exact")
    assert all(p.sigma == 0.0 for p in exact)
    rows = _rows(tmp_path / "p.csv")
    assert [r["filter"] for r in rows] == ["rb_sis", "rb_sis", "sis", "sis", "exact", "exact"]
    trace = _rows(tmp_path / "tr.csv")
    assert len(trace) == 2 * 2 * 4 * 6  # filters x sizes x repeats x (t = 0..5)
    # process workers leave everything but the timing columns unchanged
    cfg2 = ExperimentConfig(**{**cfg.__dict__, "workers": 2, "csv": str(tmp_path / "q.csv"), "trace_csv": None})
    run_experiment(cfg2)
    strip = lambda rows: [{k: v for k, v in r.items() if k not in ("T", "eta")} for r in rows]
    assert strip(rows) == strip(_rows(tmp_path / "q.csv"))


def _t4_file(tmp_path):
    p = tmp_path / "t4.json"
    save_hierarchy(t4(), p)
    return p


def test_stream_matches_batch_run(tmp_path):
    path = _t4_file(tmp_path)
    h = t4()
    model = h.compiled
    obs = ["lo", "hi", "hi", "lo", "hi"]
    out = io.StringIO()
    stream_filter(path, "rb_sis", 300, 2, "1", io.StringIO("\n".join(f"{t}\t{o}" for t, o in enumerate(obs, 1))), out, levels=[1, 2])
    lines = out.getvalue().splitlines()
    assert json.loads(lines[0])["header"]["filter"] == "rb_sis"
    res = run_filter(make_filter("rb_sis", model, 300, 2, 1), [model.oidx[o] for o in obs], [1, 2])
    assert lines[1:] == run_records(res)


def test_stream_skips_or_rejects_bad_lines(tmp_path, caplog):
    path = _t4_file(tmp_path)
    text = "1\tlo\n# note\n\n2\tpurple\n3 hi extra\n4\thi\n"
    out = io.StringIO()
    f = stream_filter(path, "sis", 100, 0, "1", io.StringIO(text), out)
    assert f.t == 2
    assert len(out.getvalue().splitlines()) == 3
    assert "line 4 skipped" in caplog.text and "line 5 skipped" in caplog.text
    with pytest.raises(ParseError, match="line 4"):
        stream_filter(path, "sis", 100, 0, "1", io.StringIO(text), io.StringIO(), strict=True)


def test_stream_empty_input_and_bad_arguments(tmp_path):
    path = _t4_file(tmp_path)
    out = io.StringIO()
    stream_filter(path, "rb_sis", 10, 0, "1", io.StringIO(""), out)
    assert len(out.getvalue().splitlines()) == 1
    with pytest.raises(InputError):
        stream_filter(path, "rb_sis", 10, 0, "7", io.StringIO(""), io.StringIO())
    with pytest.raises(InputError):
        stream_filter(path, "rb_sis", 10, 0, "1", io.StringIO(""), io.StringIO(), levels=[4])


def test_stream_factored(tmp_path):
    p = tmp_path / "f.json"
    save_hierarchy(factored_toy(3, 2), p)
    out = io.StringIO()
    stream_filter(p, "rb_sis", 50, 1, "0|0|0", io.StringIO("1|0|0\n1|1|0\n"), out)
    recs = [json.loads(x) for x in out.getvalue().splitlines()[1:]]
    assert [r["t"] for r in recs] == [1, 2]
    assert set(recs[0]["distribution"]) == {"climber", "sinker"}
    with pytest.raises(InputError):
        stream_filter(p, "sis", 50, 1, "0|0|0", io.StringIO(""), io.StringIO())


@pytest.mark.parametrize("name", ["t4", "two-room"])
def test_fixture_files(tmp_path, name):
    paths = make_fixture(name, tmp_path, T=5)
    oracle = json.loads(open(paths["oracle"]).read())
    assert abs(oracle["total_probability"] - 1.0) < 1e-12
    assert oracle["conditioned"] and oracle["observation_posteriors"]
    for e in oracle["conditioned"]:
        for d in e["predicted"]:
            assert abs(sum(d.values()) - 1.0) < 1e-12
    again = make_fixture(name, tmp_path / "again", T=5)
    for k in paths:
        assert open(paths[k], "rb").read() == open(again[k], "rb").read()
