import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from ipsmrf.batch import simulate_batch
from ipsmrf.exceptions import InputError
from ipsmrf.girsanov import (batch_log_weights, direct_estimate, importance_estimate,
                             martingale_diagnostic, weight, weight_monolithic)
from ipsmrf.graph import MarkedGraph, path_graph
from ipsmrf.marks import IndependentMarks
from ipsmrf.model import counterexample_graph, make_builtin, make_counterexample_model
from ipsmrf.sim import Event, PoissonStreams, Trajectory, replicate, simulate

CX_MARKS = IndependentMarks.bernoulli(0.5, fixed={2: 0})


def test_empty_w_gives_one(path5, contact):
    x = simulate(path5, contact, PoissonStreams(1), 1.0)
    lw = weight(contact, path5, x, [], 1.0)
    assert lw.value == 1.0 and lw.log_value == 0.0 and not lw.weight_is_zero


def test_constant_rates_without_jumps():
    # outer counterexample vertices have rate 0, so L = exp(-|J||W|(0-1)t)
    g, m = counterexample_graph(1, 1), make_counterexample_model()
    x = Trajectory(1.3, {1: 1, 2: 0, 3: 1}, (), dict(g.marks), tuple(sorted(g.edges)))
    lw = weight(m, g, x, [1, 3], 1.3)
    assert lw.value == pytest.approx(math.exp(2 * 1.3), rel=1e-14)


def test_zero_target_rate_at_reference_jump():
    g, m = counterexample_graph(1, 1), make_counterexample_model()
    x = Trajectory(1.0, {1: 1, 2: 0, 3: 1}, (Event(0.4, 2, 1, 1),), dict(g.marks))
    lw = weight(m, g, x, [2], 1.0)
    assert lw.weight_is_zero and lw.value == 0.0 and lw.log_value == -math.inf
    # the jump sits at 0.4, so the weight on [0, 0.4) is still positive
    assert weight(m, g, x, [2], 0.4, open_interval=True).value > 0


def test_time_beyond_horizon_rejected(path5, contact):
    x = simulate(path5, contact, PoissonStreams(1), 1.0, frozen=[3])
    with pytest.raises(InputError):
        weight(contact, path5, x, [3], 1.5)


def test_time_varying_compensator_exact():
    gamma, delay, t = 0.7, 0.5, 1.7
    g = MarkedGraph.from_edges([0], [], marks={0: 1})
    m = make_builtin("delayed_sir", {"beta": 1.0, "gamma": gamma, "delay": delay})
    x = Trajectory(t, {0: 1}, (), {0: 1})
    lw = weight(m, g, x, [0], t)
    exact = gamma * (t - delay * (1 - math.exp(-t / delay))) - t
    assert lw.compensator == pytest.approx(exact, abs=1e-9)
    assert lw.quadrature_error <= 1e-8


@given(st.integers(0, 2**40), st.sampled_from([[3], [2, 4], [1, 5], [1, 2, 3, 4, 5]]),
       st.floats(0.1, 2.0))
def test_per_vertex_sum_equals_monolithic(seed, w, t):
    g = path_graph(5, start=1, marks={v: (v * seed) % 2 for v in range(1, 6)})
    m = make_builtin("contact", {"lambda": 1.5, "mu": 1.0})
    x = simulate(g, m, PoissonStreams(seed), 2.0, frozen=w)
    a = weight(m, g, x, w, t)
    b = weight_monolithic(m, g, x, w, t)
    assert a.weight_is_zero == b.weight_is_zero
    if not a.weight_is_zero:
        assert math.fsum(a.per_vertex.values()) == pytest.approx(b.log_value, abs=1e-12)
        assert a.log_value == pytest.approx(b.log_value, abs=1e-12)


@given(st.integers(0, 2**40), st.floats(0.05, 1.9))
def test_open_closed_agree_off_jump_times(seed, t):
    g = path_graph(5, start=1, marks={v: (v + seed) % 2 for v in range(1, 6)})
    m = make_builtin("contact", {"lambda": 1.5, "mu": 1.0})
    x = simulate(g, m, PoissonStreams(seed), 2.0, frozen=[3])
    assert all(e.t != t for e in x.events)
    a, b = weight(m, g, x, [3], t), weight(m, g, x, [3], t, open_interval=True)
    assert a.log_value == b.log_value or a.log_value == pytest.approx(b.log_value, abs=1e-12)


def test_restriction_consistency():
    # no W-jumps between t1 and t2 and rates constant there
    g, m = counterexample_graph(1, 0), make_counterexample_model()
    x = Trajectory(2.0, {1: 1, 2: 0, 3: 0}, (Event(0.5, 2, 1, 1),), dict(g.marks))
    l1, l2 = weight(m, g, x, [1, 2], 0.8), weight(m, g, x, [1, 2], 1.9)
    # after the jump vertex 2 has rate 0 and vertex 1 rate 0: d(log L)/dt = 2
    assert l2.log_value == pytest.approx(l1.log_value + 2 * (1.9 - 0.8), abs=1e-13)


def test_batch_weights_match_scalar(path5, contact, half):
    xs = replicate(path5, contact, 2.0, [2, 3], 80, 17, half)
    batch = simulate_batch(path5, contact, 2.0, [2, 3], 80, 17, half)
    for t, open_ in [(1.0, False), (2.0, True)]:
        lv, zero = batch_log_weights(contact, path5, batch, [2, 3], t, open_)
        for r, x in enumerate(xs):
            lw = weight(contact, path5.with_marks(x.marks), x, [2, 3], t, open_)
            assert zero[r] == lw.weight_is_zero
            if not zero[r]:
                assert lv[r] == pytest.approx(lw.log_value, abs=1e-12)


def test_importance_with_constant_f_is_near_one(path5, contact, half):
    est, se = importance_estimate(contact, path5, [3], 1.0, lambda b: np.ones(len(b)),
                                  20_000, 3, half)
    assert abs(est - 1.0) <= 4 * se


def test_importance_birth_death_closed_form():
    a, b, t = 2.0, 3.0, 0.7
    g = MarkedGraph.from_edges([0], [], marks={0: 0})
    m = make_builtin("constant_birth_death", {"a": a, "b": b})
    est, se = importance_estimate(m, g, [0], t,
                                  lambda bt: bt.states_at(t, left=True)[:, 0] == 1, 40_000, 9)
    exact = a / (a + b) * (1 - math.exp(-(a + b) * t))
    assert abs(est - exact) <= 4 * se


def test_importance_matches_direct_on_counterexample():
    g, m = counterexample_graph(), make_counterexample_model()

    def f(b):
        return (b.states_at(1.0, True)[:, b.column(2)] == 1) & (b.initial[:, b.column(1)] == 1)

    imp, imp_se = importance_estimate(m, g, [2], 1.0, f, 40_000, 4, CX_MARKS)
    dir_, dir_se = direct_estimate(m, g, 1.0, f, 40_000, 5, CX_MARKS)
    assert abs(imp - dir_) <= 4 * math.hypot(imp_se, dir_se)


def test_martingale_diagnostic_trivial_cases(path5, contact, half):
    rows = martingale_diagnostic(contact, path5, [3], [0.0, 0.5], 500, 1, half)
    assert rows[0]["mean"] == 1.0 and rows[0]["std_error"] == 0.0
    empty = martingale_diagnostic(contact, path5, [], [0.5, 1.0], 500, 1, half)
    assert all(r["mean"] == 1.0 and r["std_error"] == 0.0 for r in empty)


def test_martingale_diagnostic_flags_clear(path5, contact, half):
    rows = martingale_diagnostic(contact, path5, [3], [0.5, 1.0, 2.0], 20_000, 6, half)
    assert not any(r["flag"] for r in rows)


def test_grid_validation(path5, contact):
    with pytest.raises(InputError):
        martingale_diagnostic(contact, path5, [3], [1.0, 0.5], 100, 1)
