"""Likelihood ratio between the target process and the reference process.

The reference process freezes a vertex set ``W``: its vertices jump at unit
rate for every jump type.  Reweighting a reference path by

    L_t = prod_{W-jumps tau <= t} r(tau) * exp(-sum_{j, v in W} int_0^t (r^v_j(s) - 1) ds)

recovers the law of the target process on ``[0, t)``.  All arithmetic is in
log space; a zero target rate at an observed ``W``-jump gives weight 0.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import integrate

from .batch import TrajectoryBatch, simulate_batch
from .exceptions import InputError, ModelContractError, NumericError
from .graph import MarkedGraph
from .model import PIECEWISE_CONSTANT, LocalContext, Model
from .sim import Trajectory, jump_characteristics
from .validation import check_positive_int, check_vertex_set


@dataclass(frozen=True)
class LikelihoodWeight:
    log_jump_term: float
    compensator: float
    t: float
    weight_is_zero: bool = False
    per_vertex: dict = field(default_factory=dict)
    quadrature_error: float = 0.0

    @property
    def log_value(self) -> float:
        return -math.inf if self.weight_is_zero else self.log_jump_term - self.compensator

    @property
    def value(self) -> float:
        return 0.0 if self.weight_is_zero else math.exp(self.log_value)

    def to_json(self) -> dict:
        lv = self.log_value
        return {"log_value": None if math.isinf(lv) else lv, "value": self.value,
                "compensator": self.compensator, "log_jump_term": self.log_jump_term,
                "weight_is_zero": self.weight_is_zero, "t": self.t,
                "quadrature_error": self.quadrature_error,
                "per_vertex": {str(v): (None if math.isinf(x) else x)
                               for v, x in sorted(self.per_vertex.items())}}


def _checked_rate(model, t, v, j, ctx):
    r = model.rate(t, v, j, ctx)
    if not math.isfinite(r):
        raise NumericError(f"rate r^{v}_{j}({t}) is not finite")
    if r < 0:
        raise ModelContractError(f"rate r^{v}_{j}({t}) is negative: {r}")
    return r


def _compensator_piece(model, v, marks, hist, closure, a, b):
    """``sum_j int_a^b (r^v_j - 1) ds`` over an interval free of local events."""
    jumps = model.jump_set
    if model.rate_kind == PIECEWISE_CONSTANT:
        ctx = LocalContext(v, b, closure, marks, hist)
        total = math.fsum(_checked_rate(model, b, v, j, ctx) for j in jumps)
        return (total - len(jumps)) * (b - a), 0.0
    tol = model.rate_kind.quadrature_tolerance

    def f(s):
        ctx = LocalContext(v, s, closure, marks, hist)
        return math.fsum(_checked_rate(model, s, v, j, ctx) for j in jumps) - len(jumps)

    val, err = integrate.quad(f, a, b, epsabs=tol, epsrel=0.0, limit=200)
    return val, err


def _check_args(g, xhat, w, t):
    w = check_vertex_set(w, g, "w")
    if t < 0 or t > xhat.horizon:
        raise InputError(f"t={t} is outside [0, {xhat.horizon}]")
    if not xhat.is_proper:
        jump_characteristics(xhat)  # raises PropernessError
    return w


def vertex_term(model: Model, g: MarkedGraph, xhat: Trajectory, v: int, t: float,
                open_interval: bool = False):
    """Per-vertex factor ``log g_v`` as ``(log_jump, compensator, is_zero, qerr)``.

    Depends only on marks and history on ``cl(v)``.
    """
    marks = xhat.marks if xhat.marks is not None else g.marks
    hist = xhat.history()
    closure = g.closure_of(v)
    local = [e for e in xhat.events_of(closure) if e.t < t]
    breaks = [0.0] + [e.t for e in local] + [t]
    comp, qerr = [], 0.0
    for a, b in zip(breaks, breaks[1:]):
        if b > a:
            c, err = _compensator_piece(model, v, marks, hist, closure, a, b)
            comp.append(c)
            qerr += err
    log_jump, zero = [], False
    for e in xhat.events_of([v]):
        if e.t > t or (open_interval and e.t == t):
            break
        r = _checked_rate(model, e.t, v, e.j, LocalContext(v, e.t, closure, marks, hist))
        if r == 0.0:
            zero = True
        else:
            log_jump.append(math.log(r))
    return math.fsum(log_jump), math.fsum(comp), zero, qerr


def weight(model: Model, g: MarkedGraph, xhat: Trajectory, w, t: float,
           open_interval: bool = False) -> LikelihoodWeight:
    """Girsanov weight of a reference trajectory ``xhat`` at time ``t``.

    The product runs over ``W``-jumps in ``(0, t]``, or ``(0, t)`` when
    ``open_interval``.  The result also carries the per-vertex
    decomposition ``{v: log g_v}``.
    """
    w = _check_args(g, xhat, w, t)
    per_vertex, logs, comps, zero, qerr = {}, [], [], False, 0.0
    for v in w:
        lj, c, z, err = vertex_term(model, g, xhat, v, t, open_interval)
        per_vertex[v] = -math.inf if z else lj - c
        logs.append(lj)
        comps.append(c)
        zero = zero or z
        qerr += err
    return LikelihoodWeight(math.fsum(logs), math.fsum(comps), t, zero, per_vertex, qerr)


def weight_monolithic(model: Model, g: MarkedGraph, xhat: Trajectory, w, t: float,
                      open_interval: bool = False) -> LikelihoodWeight:
    """Same weight computed in one pass over the global event sequence.

    Used to cross-check the per-vertex decomposition.
    """
    w = _check_args(g, xhat, w, t)
    marks = xhat.marks if xhat.marks is not None else g.marks
    hist = xhat.history()
    watched = set()
    for v in w:
        watched.update(g.closure_of(v))
    breaks = [0.0] + [e.t for e in xhat.events_of(watched) if e.t < t] + [t]
    comps, qerr = [], 0.0
    for a, b in zip(breaks, breaks[1:]):
        if b <= a:
            continue
        for v in w:
            c, err = _compensator_piece(model, v, marks, hist, g.closure_of(v), a, b)
            comps.append(c)
            qerr += err
    logs, zero = [], False
    for tau, j, v in jump_characteristics(xhat, w):
        if tau > t or (open_interval and tau == t):
            break
        r = _checked_rate(model, tau, v, j, LocalContext(v, tau, g.closure_of(v), marks, hist))
        if r == 0.0:
            zero = True
        else:
            logs.append(math.log(r))
    return LikelihoodWeight(math.fsum(logs), math.fsum(comps), t, zero, {}, qerr)


# -- batch weights -----------------------------------------------------------

def _rate_sum(model, g, batch, X, rows, w_cols, nbr_cols):
    total = np.zeros(len(rows))
    for c in w_cols:
        v = batch.vertices[c]
        xv, xn = X[rows, c], X[rows][:, nbr_cols[c]]
        kv, kn = batch.marks[rows, c], batch.marks[rows][:, nbr_cols[c]]
        for j in model.jump_set:
            total += np.asarray(model.markov_rate(v, j, xv, xn, kv, kn), dtype=np.float64) - 1.0
    return total


def batch_log_weights(model: Model, g: MarkedGraph, batch: TrajectoryBatch, w, t: float,
                      open_interval: bool = False):
    """Vectorised weights for a batch of reference trajectories.

    Returns ``(log_value, is_zero)`` arrays; ``log_value`` is ``-inf`` where
    the weight vanishes.  Markov models use an exact replay; other models
    fall back to :func:`weight` per trajectory.
    """
    w = check_vertex_set(w, g, "w")
    if t < 0 or t > batch.horizon:
        raise InputError(f"t={t} is outside [0, {batch.horizon}]")
    R = len(batch)
    if not w:
        return np.zeros(R), np.zeros(R, dtype=bool)
    if not (model.markovian and model.rate_kind == PIECEWISE_CONSTANT):
        out = [weight(model, g, x, w, t, open_interval) for x in batch]
        return (np.array([o.log_value for o in out]),
                np.array([o.weight_is_zero for o in out]))

    colof = {v: i for i, v in enumerate(batch.vertices)}
    w_cols = [colof[v] for v in w]
    w_set = set(w_cols)
    nbr_cols = {i: np.array([colof[u] for u in g.neighbors(v)], dtype=np.int64)
                for i, v in enumerate(batch.vertices)}
    X = batch.initial.copy()
    prev = np.zeros(R)
    comp = np.zeros(R)
    logj = np.zeros(R)
    zero = np.zeros(R, dtype=bool)
    n_ev = batch.n_events
    # only events before t matter; rows are time ordered
    before = (batch.times < t) if open_interval else (batch.times <= t)
    n_use = np.bincount(batch.rows[before], minlength=R)
    for k in range(int(n_use.max(initial=0))):
        rows = np.nonzero(n_use > k)[0]
        e = batch.offsets[rows] + k
        te = batch.times[e]
        seg_end = np.minimum(te, t)
        comp[rows] += _rate_sum(model, g, batch, X, rows, w_cols, nbr_cols) * (seg_end - prev[rows])
        cols = batch.cols[e]
        jumps = batch.jumps[e]
        for c in w_set & set(np.unique(cols).tolist()):
            v = batch.vertices[c]
            for j in model.jump_set:
                sel = (cols == c) & (jumps == j)
                if not sel.any():
                    continue
                rr = rows[sel]
                r = np.asarray(model.markov_rate(v, j, X[rr, c], X[rr][:, nbr_cols[c]],
                                                 batch.marks[rr, c],
                                                 batch.marks[rr][:, nbr_cols[c]]),
                               dtype=np.float64)
                r = np.broadcast_to(r, rr.shape)
                if (r < 0).any() or not np.isfinite(r).all():
                    raise ModelContractError(f"invalid rate at vertex {v}")
                pos = r > 0
                logj[rr[pos]] += np.log(r[pos])
                zero[rr[~pos]] = True
        X[rows, cols] = batch.states[e]
        prev[rows] = seg_end
    del n_ev
    comp += _rate_sum(model, g, batch, X, np.arange(R), w_cols, nbr_cols) * np.maximum(t - prev, 0.0)
    log_value = np.where(zero, -np.inf, logj - comp)
    return log_value, zero


def _mean_se(values: np.ndarray):
    n = len(values)
    mean = math.fsum(values.tolist()) / n
    var = math.fsum(((values - mean) ** 2).tolist()) / (n - 1) if n > 1 else 0.0
    return mean, math.sqrt(var / n)


def importance_estimate(model: Model, g: MarkedGraph, w, horizon: float, f, n_reps: int,
                        seed: int, marks_sampler=None, threads: int = 1):
    """Estimate ``E_target[f]`` as the reference-process mean of ``L_{t-} * f``.

    ``f`` maps a :class:`TrajectoryBatch` (paths on ``[0, horizon)``) to one
    bounded value per replicate.  Returns ``(estimate, std_error)``.
    """
    n_reps = check_positive_int(n_reps, "n_reps", minimum=2)
    w = check_vertex_set(w, g, "w")
    batch = simulate_batch(g, model, horizon, w, n_reps, seed, marks_sampler, threads=threads)
    log_w, _ = batch_log_weights(model, g, batch, w, horizon, open_interval=True)
    vals = np.exp(log_w) * np.asarray(f(batch), dtype=np.float64)
    return _mean_se(vals)


def direct_estimate(model: Model, g: MarkedGraph, horizon: float, f, n_reps: int, seed: int,
                    marks_sampler=None, threads: int = 1):
    """Plain Monte Carlo mean of ``f`` under the target process."""
    n_reps = check_positive_int(n_reps, "n_reps", minimum=2)
    batch = simulate_batch(g, model, horizon, (), n_reps, seed, marks_sampler, threads=threads)
    return _mean_se(np.asarray(f(batch), dtype=np.float64))


def martingale_diagnostic(model: Model, g: MarkedGraph, w, time_grid, n_reps: int, seed: int,
                          marks_sampler=None, threads: int = 1) -> list:
    """Monte Carlo mean of ``L_t`` on ``time_grid`` with 4-sigma flags."""
    grid = [float(s) for s in time_grid]
    if any(b <= a for a, b in zip(grid, grid[1:])) or not grid or grid[0] < 0:
        raise InputError("time grid must be nonnegative and strictly increasing")
    n_reps = check_positive_int(n_reps, "n_reps", minimum=2)
    w = check_vertex_set(w, g, "w")
    horizon = max(grid[-1], 1e-12)
    batch = simulate_batch(g, model, horizon, w, n_reps, seed, marks_sampler, threads=threads)
    out = []
    for s in grid:
        log_w, _ = batch_log_weights(model, g, batch, w, s)
        mean, se = _mean_se(np.exp(log_w))
        out.append({"t": s, "mean": mean, "std_error": se,
                    "flag": bool(abs(mean - 1.0) > 4.0 * se)})
    return out
