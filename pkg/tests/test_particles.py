import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ahmm.errors import ModelEvidenceError
from ahmm.particles import (
    effective_sample_size,
    normalize_log_weights,
    pick,
    resample_uniform,
    run_chunks,
    step_uniforms,
    systematic_resample,
)

weights = st.lists(st.floats(0.0, 1.0), min_size=1, max_size=50).filter(lambda w: sum(w) > 1e-6)


@settings(max_examples=200, deadline=None)
@given(weights, st.floats(0.0, 1.0, exclude_max=True))
def test_systematic_resample_counts(w, u):
    w = np.asarray(w) / sum(w)
    idx = systematic_resample(w, u)
    n = len(w)
    counts = np.bincount(idx, minlength=n)
    assert counts.sum() == n
    # each index is copied floor(n w) or ceil(n w) times, up to float slack at the edges
    assert np.all(counts >= np.floor(n * w - 1e-9) - 1)
    assert np.all(counts <= np.ceil(n * w + 1e-9) + 1)
    assert np.all(counts[w == 0] == 0)


@settings(max_examples=200, deadline=None)
@given(weights, st.floats(0.0, 1.0, exclude_max=True))
def test_pick_never_returns_zero_mass(p, u):
    z = sum(p)
    i = pick(p, u * z)
    assert p[i] > 0


def test_pick_inverse_cdf():
    assert pick([0.2, 0.0, 0.8], 0.1) == 0
    assert pick([0.2, 0.0, 0.8], 0.2) == 2
    assert pick([0.2, 0.0, 0.8], 0.9999) == 2


@settings(max_examples=100, deadline=None)
@given(weights)
def test_ess_bounds(w):
    w = np.asarray(w) / sum(w)
    ess = effective_sample_size(w)
    assert 1.0 - 1e-9 <= ess <= len(w) + 1e-9


def test_all_dead_raises():
    with pytest.raises(ModelEvidenceError):
        normalize_log_weights(np.array([-np.inf, -np.inf]))
    w = normalize_log_weights(np.array([0.0, -np.inf, np.log(3.0)]))
    assert np.allclose(w, [0.25, 0.0, 0.75])


def test_uniform_streams_are_schedule_free():
    a = step_uniforms(5, 3, 10, 4)
    b = step_uniforms(5, 3, 10, 4)
    assert a == b and len(a) == 10 and len(a[0]) == 4
    assert step_uniforms(5, 4, 10, 4) != a
    assert resample_uniform(5, 3) == resample_uniform(5, 3)


@pytest.mark.parametrize("workers", [1, 2, 3, 7])
def test_run_chunks_preserves_order(workers):
    out = run_chunks(lambda lo, hi: list(range(lo, hi)), 23, workers)
    assert out == list(range(23))
