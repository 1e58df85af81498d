import math

import numpy as np
import pytest
from hypothesis import given, strategies as st
from scipy import stats

from ipsmrf.batch import TrajectoryBatch, simulate_batch
from ipsmrf.exceptions import InputError, PropernessError
from ipsmrf.graph import MarkedGraph, erdos_renyi_graph, neighborhood, path_graph
from ipsmrf.marks import IndependentMarks
from ipsmrf.model import counterexample_graph, make_builtin, make_counterexample_model
from ipsmrf.sim import (Event, PoissonStreams, Trajectory, dual, jump_characteristics,
                        load_trajectory, replicate, save_trajectory, simulate)


def one_vertex(mark=0):
    return MarkedGraph.from_edges([0], [], marks={0: mark})


def test_birth_death_absorbs_when_b_is_zero():
    m = make_builtin("constant_birth_death", {"a": 1.0, "b": 0.0})
    for k in range(50):
        x = simulate(one_vertex(), m, PoissonStreams(11, k), 5.0)
        assert len(x.events) <= 1
        assert all(e.j == 1 and e.s == 1 for e in x.events)


def test_counterexample_single_exponential_jump():
    g, m = counterexample_graph(1, 0), make_counterexample_model()
    times = []
    for k in range(2000):
        x = simulate(g, m, PoissonStreams(3, k), 50.0)
        assert [e.v for e in x.events] in ([2],)
        times.append(x.events[0].t)
    assert stats.kstest(times, "expon").pvalue > 1e-3


def test_counterexample_equal_outer_marks_never_jump():
    x = simulate(counterexample_graph(1, 1), make_counterexample_model(), PoissonStreams(0), 20.0)
    assert x.events == ()


def test_all_frozen_total_count_is_poisson():
    g = path_graph(4, start=1, marks={v: 0 for v in range(1, 5)})
    m = make_builtin("sir", {"beta": 1.0, "gamma": 1.0})   # J = {+1}
    batch = simulate_batch(g, m, 0.5, g.vertices, 20_000, 8)
    counts = batch.n_events
    mu = 4 * 1 * 0.5
    ks = np.arange(0, 7)
    expected = np.append(stats.poisson.pmf(ks, mu), stats.poisson.sf(6, mu)) * len(counts)
    observed = np.append([np.sum(counts == k) for k in ks], np.sum(counts > 6))
    assert stats.chisquare(observed, expected).pvalue > 1e-3


def test_frozen_interevent_times_are_unit_exponential():
    # long horizon so the first three gaps of each jump type are never censored
    g = path_graph(3, start=1, marks={1: 0, 2: 0, 3: 1})
    m = make_builtin("contact", {"lambda": 1.5, "mu": 1.0})
    batch = simulate_batch(g, m, 40.0, [2], 1500, 21)
    for j in (1, -1):
        gaps = []
        for r in range(len(batch)):
            sl = slice(batch.offsets[r], batch.offsets[r + 1])
            sel = (batch.cols[sl] == batch.column(2)) & (batch.jumps[sl] == j)
            ts = np.concatenate([[0.0], batch.times[sl][sel][:3]])
            assert len(ts) == 4
            gaps.append(np.diff(ts))
        gaps = np.array(gaps)
        for k in range(3):
            assert stats.kstest(gaps[:, k], "expon").pvalue > 1e-3, (j, k)
        assert abs(stats.spearmanr(gaps[:, 0], gaps[:, 1])[0]) < 0.1


def test_birth_death_marginal_matches_closed_form():
    a, b, t, n = 2.0, 3.0, 0.7, 40_000
    batch = simulate_batch(one_vertex(), make_builtin("constant_birth_death", {"a": a, "b": b}),
                           t, (), n, 4)
    est = np.mean(batch.states_at(t, left=False)[:, 0] == 1)
    exact = a / (a + b) * (1 - math.exp(-(a + b) * t))
    assert abs(est - exact) <= 4 * math.sqrt(exact * (1 - exact) / n)


def test_properness_over_many_trajectories(path5, contact, half):
    batch = simulate_batch(path5, contact, 1.0, (), 100_000, 2, half)
    for r in range(0, 100_000, 997):
        times = batch.times[batch.offsets[r]:batch.offsets[r + 1]]
        assert np.all(np.diff(times) > 0)
    # rows are concatenated in order; duplicates would show as zero gaps inside a row
    same_row = batch.rows[1:] == batch.rows[:-1]
    assert np.all(np.diff(batch.times)[same_row] > 0)


class DoubledBound:
    """Same rates, twice the declared thinning bound."""

    def __init__(self, inner):
        self._inner = inner

    def __getattr__(self, name):
        return getattr(self._inner, name)

    def rate_bound(self, closure_size, horizon):
        return 2.0 * self._inner.rate_bound(closure_size, horizon)


def test_thinning_invariance_pathwise(path5, contact):
    doubled = DoubledBound(contact)
    for k in range(30):
        s = PoissonStreams(5, k)
        assert simulate(path5, contact, s, 2.0).events == simulate(path5, doubled, s, 2.0).events


def test_thinning_invariance_in_law(path5, contact, half):
    n = 3000
    base = simulate_batch(path5, contact, 1.0, (), n, 1, half)
    other = simulate_batch(path5, DoubledBound(contact), 1.0, (), n, 2, half)
    for feature in (lambda b: b.n_events, lambda b: b.states_at(1.0, False) @ (2 ** np.arange(5))):
        assert stats.ks_2samp(feature(base), feature(other)).pvalue > 1e-3


@given(st.integers(0, 2**32), st.integers(3, 7), st.floats(0.2, 0.6))
def test_autonomy_on_induced_subgraph(seed, n, p):
    g = erdos_renyi_graph(n, p, seed=seed, marks={v: v % 2 for v in range(n)})
    m = make_builtin("contact", {"lambda": 1.2, "mu": 0.8})
    vn = {0, 1}
    a = vn | neighborhood(g, vn, 1)
    # every vertex of A outside V_n has its closure inside A by construction
    inner = a - vn
    a = {v for v in a if v in vn or set(g.closure_of(v)) <= a}
    if not all(set(g.closure_of(v)) <= a for v in inner if v in a):
        return
    s = PoissonStreams(seed, 0)
    full = simulate(g, m, s, 1.5, frozen=sorted(vn))
    sub = simulate(g.subgraph(a), m, s, 1.5, frozen=sorted(vn))
    assert full.restrict(a).events == sub.events


def test_jump_characteristics_examples():
    x0 = Trajectory(1.0, {1: 0, 2: 0})
    assert jump_characteristics(x0).triples == ()
    assert dual(x0).total == 0
    x = Trajectory(1.0, {1: 0, 2: 0}, (Event(0.2, 1, 1, 1), Event(0.7, 2, 1, 1),
                                        Event(0.8, 1, -1, 0)))
    assert [tuple(p) for p in jump_characteristics(x, [2]).triples] == [(0.7, 1, 2)]
    assert [p.v for p in jump_characteristics(x, [1, 2]).triples] == [1, 2, 1]
    assert dual(x, [1, 2]).restrict([2]) == dual(x, [2])


def test_improper_trajectory_rejected():
    x = Trajectory(1.0, {1: 0, 2: 0}, (Event(0.5, 1, 1, 1), Event(0.5, 2, 1, 1)))
    assert not x.is_proper
    with pytest.raises(PropernessError):
        jump_characteristics(x)


def test_trajectory_consistency_checks():
    with pytest.raises(InputError):
        Trajectory(1.0, {1: 0}, (Event(0.5, 1, 1, 2),))
    with pytest.raises(InputError):
        Trajectory(1.0, {1: 0}, (Event(1.5, 1, 1, 1),))
    with pytest.raises(InputError):
        Trajectory(1.0, {1: 0}, (Event(0.6, 1, 1, 1), Event(0.5, 1, 1, 2)))


def test_jsonl_round_trip(tmp_path, path5, contact):
    x = simulate(path5, contact, PoissonStreams(9, 4), 2.0, frozen=[3])
    p = tmp_path / "x.jsonl"
    save_trajectory(x, p)
    assert load_trajectory(p) == x
    header = p.read_text().splitlines()[0]
    assert header.startswith('{"horizon": 2.0, "initial": ')


def test_replicate_determinism(path5, contact, half):
    a = replicate(path5, contact, 1.0, (), 20, 77, half)
    b = replicate(path5, contact, 1.0, (), 20, 77, half, threads=4)
    assert a == b
    assert a[0].events != a[1].events


def test_batch_equals_scalar(path5, contact, half):
    scalar = replicate(path5, contact, 1.5, [2, 4], 60, 13, half)
    batch = simulate_batch(path5, contact, 1.5, [2, 4], 60, 13, half, block=7)
    assert [batch.trajectory(r).events for r in range(60)] == [x.events for x in scalar]
    rebuilt = TrajectoryBatch.from_trajectories(scalar).trajectory(5)
    assert (rebuilt.events, rebuilt.initial) == (scalar[5].events, scalar[5].initial)


def test_batch_threads_invariant(path5, contact, half):
    a = simulate_batch(path5, contact, 1.0, (), 5000, 3, half, threads=1, block=512)
    b = simulate_batch(path5, contact, 1.0, (), 5000, 3, half, threads=4, block=512)
    for field in ("offsets", "times", "cols", "jumps", "states", "initial", "marks"):
        assert np.array_equal(getattr(a, field), getattr(b, field)), field


def test_non_markov_batch_falls_back():
    g = path_graph(3, start=1, marks={1: 1, 2: 0, 3: 0})
    m = make_builtin("delayed_sir", {"beta": 1.0, "gamma": 1.0, "delay": 0.5})
    batch = simulate_batch(g, m, 2.0, (), 10, 5)
    assert [batch.trajectory(r).events for r in range(10)] == \
        [x.events for x in replicate(g, m, 2.0, (), 10, 5)]


def test_simulate_input_errors(path5, contact):
    with pytest.raises(InputError):
        simulate(path5, contact, PoissonStreams(0), 0.0)
    with pytest.raises(InputError):
        simulate(path5, contact, PoissonStreams(0), 1.0, frozen=[42])
    with pytest.raises(InputError):
        PoissonStreams(-1)


def test_marks_sampler_is_addressable():
    s = IndependentMarks.bernoulli(0.3, fixed={2: 0})
    full = s.sample([1, 2, 3], 5, range(100))
    assert np.array_equal(full[40:50], s.sample([1, 2, 3], 5, range(40, 50)))
    assert set(full[:, 1]) == {0}
    assert 0.15 < full[:, 0].mean() < 0.45
