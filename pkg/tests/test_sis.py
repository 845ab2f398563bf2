import math
from collections import Counter

import pytest

from ahmm.errors import ModelEvidenceError
from ahmm.fixtures import t4
from ahmm.oracle import observation_posteriors
from ahmm.particles import run_filter
from ahmm.sis_baseline import SISFilter, sis_particle_step
from ahmm.simulator import simulate

from conftest import tv, uniform_top


def _obs(h, T=6, seed=7):
    model = h.compiled
    tr = simulate(h, "A", "1", T, seed)
    return [model.oidx[x.o] for x in tr.steps if x.l < model.K]


def test_initial_stacks_follow_prior_and_selection(t4_model):
    f = SISFilter(t4_model, 20000, 3, 1, {0: 0.3, 1: 0.7})
    tops = Counter(st[2] for st in f.stacks)
    assert abs(tops[0] / 20000 - 0.3) < 0.015
    # under top A at state 1, go-left has probability 0.8
    lvl1 = Counter(st[1] for st in f.stacks if st[2] == 0)
    assert abs(lvl1[0] / tops[0] - 0.8) < 0.03


def test_particle_step_weight_is_observation_likelihood(t4_model):
    stack = (1, 1, 0)  # R under go-right under A
    r = sis_particle_step(t4_model, stack, 1, t4_model.oidx["hi"], [0.5] * 6)
    new, s, l, inc = r
    # Pr(hi | next state): move to 2 with 0.9 (hi 0.7) or stay at 1 with 0.1 (hi 0.3)
    assert abs(math.exp(inc) - (0.9 * 0.7 + 0.1 * 0.3)) < 1e-12
    assert s in (1, 2) and 0 <= l < 2


def test_particle_dies_when_top_terminates():
    model = t4().compiled
    # a top policy never terminates in T4, so force it through a patched beta table
    saved = model.beta[2][0]
    model.beta[2][0] = {s: 1.0 for s in range(4)}
    try:
        stack = (0, 0, 0)  # L under go-left under A, at state 1 arriving at 0 ends go-left
        r = sis_particle_step(model, stack, 1, model.oidx["lo"], [0.0] * 6)
        assert r is None
    finally:
        model.beta[2][0] = saved


def test_sis_tracks_observation_oracle(t4_h):
    model = t4_h.compiled
    obs = _obs(t4_h)
    ref = observation_posteriors(model, uniform_top(model, 1), 1, obs)
    res = run_filter(SISFilter(model, 20000, 4, 1), obs, [0, 1, 2], kinds=("predicted", "filtered"))
    by = {(e.t, e.level, e.kind): e.probs for e in res.estimates}
    for t, r in enumerate(ref, start=1):
        for k in range(3):
            n = len(model.pids[k])
            assert tv(by[(t, k, "predicted")], [r["predicted"][k].get(p, 0.0) for p in range(n)]) < 0.03
            assert tv(by[(t, k, "filtered")], [r["filtered"][k].get(p, 0.0) for p in range(n)]) < 0.03
    assert abs(res.log_evidence - math.log(ref[-1]["evidence"])) < 0.05


def test_workers_do_not_change_results(t4_h):
    model = t4_h.compiled
    obs = _obs(t4_h)
    one = run_filter(SISFilter(model, 400, 9, 1), obs, [2])
    many = run_filter(SISFilter(model, 400, 9, 1, workers=3), obs, [2])
    assert [e.probs for e in one.estimates] == [e.probs for e in many.estimates]


def test_all_particles_dead_raises():
    model = t4(noisy=False).compiled
    f = SISFilter(model, 30, 0, 1)
    with pytest.raises(ModelEvidenceError):
        f.step(model.oidx["3"])
