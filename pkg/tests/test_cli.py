import json
import subprocess
import sys

import pytest

from ahmm.cli import EXIT_DATA, EXIT_EVIDENCE, EXIT_OK, EXIT_USAGE, main
from ahmm.fixtures import t4
from ahmm.serialization import hierarchy_to_dict, save_hierarchy


@pytest.fixture
def t4_file(tmp_path):
    p = tmp_path / "t4.json"
    save_hierarchy(t4(), p)
    return str(p)


def test_validate(t4_file, tmp_path, capsys):
    assert main(["validate", t4_file]) == EXIT_OK
    assert "0 violation(s)" in capsys.readouterr().out
    doc = hierarchy_to_dict(t4())
    doc["levels"][1]["policies"][0]["select"]["1"] = {"L": 0.5, "stay": 0.2}
    bad = tmp_path / "bad.json"
    bad.write_text(json.dumps(doc))
    assert main(["validate", str(bad)]) == EXIT_DATA
    assert "distribution not normalized" in capsys.readouterr().out
    broken = tmp_path / "broken.json"
    broken.write_text("{")
    assert main(["validate", str(broken)]) == EXIT_DATA


def test_usage_errors():
    with pytest.raises(SystemExit) as e:
        main(["filter"])
    assert e.value.code == EXIT_USAGE
    with pytest.raises(SystemExit) as e:
        main(["frobnicate"])
    assert e.value.code == EXIT_USAGE


def test_build_simulate_filter_pipeline(tmp_path, capsys):
    h = tmp_path / "b.json"
    meta = tmp_path / "meta.json"
    assert main(["build-scenario", "-o", str(h), "--meta", str(meta), "--slip", "0.2"]) == EXIT_OK
    assert set(json.loads(meta.read_text())["entrances"]) == {"W", "N", "S", "E"}
    assert main(["validate", str(h)]) == EXIT_OK
    tr, obs = tmp_path / "tr.tsv", tmp_path / "obs.tsv"
    assert main(["simulate", str(h), "--top", "exit-S", "--s0", "12,0", "--steps", "15", "--seed", "1",
                 "-o", str(tr), "--observations", str(obs)]) == EXIT_OK
    out = tmp_path / "est.jsonl"
    assert main(["filter", str(h), "-n", "200", "--s0", "12,0", "-i", str(obs), "-o", str(out),
                 "--levels", "2,3", "--filtered"]) == EXIT_OK
    recs = [json.loads(x) for x in out.read_text().splitlines()]
    assert recs[0]["header"]["levels"] == [2, 3]
    body = recs[1:]
    assert {(r["level"], r["kind"]) for r in body} == {(2, "predicted"), (2, "filtered"), (3, "predicted"), (3, "filtered")}
    assert all(r["wall_ns"] is None for r in body)
    ex = tmp_path / "exact.jsonl"
    assert main(["filter", str(h), "--kind", "exact", "-i", str(tr), "-o", str(ex)]) == EXIT_OK
    last = json.loads(ex.read_text().splitlines()[-1])
    assert abs(sum(last["distribution"].values()) - 1.0) < 1e-12


def test_timing_fills_wall_clock(t4_file, tmp_path):
    obs = tmp_path / "o.txt"
    obs.write_text("lo\nhi\n")
    out = tmp_path / "e.jsonl"
    assert main(["filter", t4_file, "--s0", "1", "-n", "20", "-i", str(obs), "-o", str(out), "--timing"]) == EXIT_OK
    assert all(json.loads(x)["wall_ns"] > 0 for x in out.read_text().splitlines()[1:])


def test_evidence_inconsistency_exit_code(tmp_path):
    p = tmp_path / "t4id.json"
    save_hierarchy(t4(noisy=False), p)
    obs = tmp_path / "o.txt"
    obs.write_text("3\n")
    assert main(["filter", str(p), "--s0", "1", "-n", "20", "-i", str(obs), "-o", str(tmp_path / "x")]) == EXIT_EVIDENCE


def test_strict_input(t4_file, tmp_path):
    obs = tmp_path / "o.txt"
    obs.write_text("lo\nblue\n")
    args = ["filter", t4_file, "--s0", "1", "-n", "20", "-i", str(obs), "-o", str(tmp_path / "x")]
    assert main(args) == EXIT_OK
    assert main(args + ["--strict"]) == EXIT_DATA


def test_unknown_start_state(t4_file, tmp_path):
    obs = tmp_path / "o.txt"
    obs.write_text("lo\n")
    assert main(["filter", t4_file, "--s0", "9", "-i", str(obs), "-o", str(tmp_path / "x")]) == EXIT_DATA


def test_bench_and_fixtures(tmp_path, capsys):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"scenario": "t4", "top": "A", "horizon": 4}))
    out = tmp_path / "p.csv"
    assert main(["bench", "--config", str(cfg), "--sizes", "30,60", "--repeats", "3", "--csv", str(out)]) == EXIT_OK
    text = capsys.readouterr().out
    assert "rb_sis\tN=30" in text and "sigma ~" in text
    assert out.read_text().startswith("filter,N,runs")
    bad = tmp_path / "bad.json"
    bad.write_text(json.dumps({"scenaro": "t4"}))
    assert main(["bench", "--config", str(bad)]) == EXIT_DATA
    assert main(["fixtures", "t4", "--out", str(tmp_path / "fx"), "--steps", "4"]) == EXIT_OK
    assert "t4\toracle" in capsys.readouterr().out


def test_console_script_and_broken_pipe(t4_file, tmp_path):
    r = subprocess.run([sys.executable, "-m", "ahmm.cli", "--help"], capture_output=True, text=True)
    assert r.returncode == 0 and "simulate" in r.stdout
    obs = tmp_path / "o.txt"
    obs.write_text("lo\n" * 200)
    r = subprocess.run(
        f"{sys.executable} -m ahmm.cli filter {t4_file} --s0 1 -n 50 -i {obs} | head -n 2",
        shell=True, capture_output=True, text=True,
    )
    assert r.stdout.count("\n") == 2
    assert "Traceback" not in r.stderr
