import numpy as np
import pytest
from hypothesis import given, strategies as st
from scipy import stats

from ipsmrf.exceptions import InputError
from ipsmrf.marks import IndependentMarks
from ipsmrf.rng import derive_keys, derive_seed, uniforms

u64 = st.integers(0, 2**64 - 1)


@given(u64, st.lists(st.integers(0, 2**32), min_size=1, max_size=4))
def test_derive_keys_broadcasts_like_scalar(seed, parts):
    arr = derive_keys(np.uint64(seed), np.array(parts, dtype=np.uint64))
    for p, k in zip(parts, arr):
        assert int(k) == derive_seed(seed, p)


@given(u64, st.integers(0, 1000))
def test_uniforms_open_interval(key, n):
    u = uniforms(np.full(n + 1, key, dtype=np.uint64), np.arange(n + 1))
    assert ((u > 0) & (u < 1)).all()


def test_uniforms_are_uniform():
    u = uniforms(np.uint64(derive_seed(1, 2)), np.arange(100_000))
    assert stats.kstest(u, "uniform").pvalue > 1e-3


def test_labels_separate_streams():
    assert len({derive_seed(0, k) for k in range(1000)}) == 1000
    assert derive_seed(3, 1, 2) != derive_seed(3, 2, 1)


@given(st.integers(0, 2**32), st.lists(st.integers(0, 500), min_size=1, max_size=20, unique=True))
def test_mark_draws_addressed_by_replicate(seed, reps):
    marks = IndependentMarks.bernoulli(0.3, fixed={2: 0})
    full = marks.sample([1, 2, 3], seed, np.arange(501))
    sub = marks.sample([1, 2, 3], seed, reps)
    assert (sub == full[reps]).all()
    assert (full[:, 1] == 0).all()


def test_bernoulli_frequency():
    x = IndependentMarks.bernoulli(0.3).sample([7], 11, np.arange(50_000))[:, 0]
    assert abs(x.mean() - 0.3) < 4 * np.sqrt(0.21 / 50_000)


@given(st.dictionaries(st.integers(0, 9), st.sampled_from([0, 1, 2]), max_size=4))
def test_config_round_trip(fixed):
    marks = IndependentMarks.bernoulli(0.25, fixed=fixed)
    back = IndependentMarks.from_config(marks.to_config())
    assert back.to_config() == marks.to_config()
    vs = list(range(10))
    assert (back.sample(vs, 5, range(50)) == marks.sample(vs, 5, range(50))).all()


@pytest.mark.parametrize("config", [
    {"default": {"0": 0.7}},
    {"default": {"0": 0.5, "1": 0.5}, "extra": 1},
    {"per_vertex": {"a": {"0": 1.0}}},
    [1, 2],
])
def test_bad_configs_rejected(config):
    with pytest.raises(InputError):
        IndependentMarks.from_config(config)


def test_missing_default_rejected():
    with pytest.raises(InputError, match="vertex 4"):
        IndependentMarks.constant({1: 0}).sample([1, 4], 0, [0])
