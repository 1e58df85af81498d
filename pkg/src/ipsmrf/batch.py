"""Vectorised thinning for Markov models, many replicates at once.

The batch simulator advances all replicates of a block in lock-step: in
every sweep each live replicate consumes its earliest pending candidate.
Candidates are read from the same counter-addressed streams as
:func:`ipsmrf.sim.simulate`, with the same ``(time, vertex, layer)``
ordering, so replicate ``k`` of a batch is the same trajectory that the
scalar simulator produces from ``PoissonStreams(seed, k)``.
"""
from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .exceptions import InputError, ModelContractError, NumericError, UnsupportedModelError
from .graph import MarkedGraph
from .model import Model
from .rng import STREAM_TAG, candidate_draws, derive_keys
from .sim import Event, PoissonStreams, Trajectory, n_layers, simulate, stream_bound
from .validation import check_horizon, check_positive_int, check_seed, check_vertex_set

BLOCK = 16384


@dataclass(frozen=True)
class TrajectoryBatch:
    """Many trajectories on the same vertex set, stored as flat event arrays.

    Events of replicate ``r`` are ``slice(offsets[r], offsets[r + 1])`` of
    ``times``/``cols``/``jumps``/``states`` in time order; ``cols`` holds the
    column of the vertex in ``vertices``.
    """

    vertices: tuple
    horizon: float
    initial: np.ndarray
    marks: np.ndarray
    offsets: np.ndarray
    times: np.ndarray
    cols: np.ndarray
    jumps: np.ndarray
    states: np.ndarray
    replicates: np.ndarray
    seed: int | None = None
    frozen: tuple = ()

    def __len__(self):
        return len(self.initial)

    @property
    def n_events(self) -> np.ndarray:
        return np.diff(self.offsets)

    @property
    def rows(self) -> np.ndarray:
        """Replicate row of every event."""
        return np.repeat(np.arange(len(self)), self.n_events)

    def column(self, v: int) -> int:
        try:
            return self.vertices.index(v)
        except ValueError:
            raise InputError(f"unknown vertex {v}") from None

    def states_at(self, t: float, left: bool = True) -> np.ndarray:
        """Configurations ``x(t-)`` (or ``x(t)``), shape ``(R, n)``."""
        x = self.initial.copy()
        mask = self.times < t if left else self.times <= t
        if mask.any():
            n = len(self.vertices)
            key = self.rows[mask] * n + self.cols[mask]
            vals = self.states[mask]
            # last event per (row, vertex): unique on the reversed arrays
            ukey, first = np.unique(key[::-1], return_index=True)
            last_vals = vals[::-1][first]
            x.reshape(-1)[ukey] = last_vals
        return x

    def event_counts(self, vertices=None, t0: float = 0.0, t1: float | None = None) -> np.ndarray:
        """Number of events per replicate in ``(t0, t1]`` at ``vertices``."""
        t1 = self.horizon if t1 is None else t1
        mask = (self.times > t0) & (self.times <= t1)
        if vertices is not None:
            cols = [self.column(v) for v in vertices]
            mask &= np.isin(self.cols, cols)
        return np.bincount(self.rows[mask], minlength=len(self))

    def trajectory(self, r: int) -> Trajectory:
        lo, hi = self.offsets[r], self.offsets[r + 1]
        events = tuple(Event(float(self.times[i]), self.vertices[self.cols[i]],
                             int(self.jumps[i]), int(self.states[i])) for i in range(lo, hi))
        marks = {v: _py(self.marks[r, c]) for c, v in enumerate(self.vertices)}
        return Trajectory(self.horizon, {v: int(self.initial[r, c])
                                         for c, v in enumerate(self.vertices)},
                          events, marks, None, self.seed, int(self.replicates[r]), self.frozen)

    def __iter__(self):
        return (self.trajectory(r) for r in range(len(self)))

    def take(self, rows) -> "TrajectoryBatch":
        rows = np.asarray(rows, dtype=np.int64)
        counts = self.n_events[rows]
        idx = np.concatenate([np.arange(self.offsets[r], self.offsets[r + 1]) for r in rows]) \
            if len(rows) else np.zeros(0, dtype=np.int64)
        offsets = np.concatenate([[0], np.cumsum(counts)]).astype(np.int64)
        return TrajectoryBatch(self.vertices, self.horizon, self.initial[rows], self.marks[rows],
                               offsets, self.times[idx], self.cols[idx], self.jumps[idx],
                               self.states[idx], self.replicates[rows], self.seed, self.frozen)

    @classmethod
    def concatenate(cls, parts) -> "TrajectoryBatch":
        parts = list(parts)
        first = parts[0]
        counts = np.concatenate([p.n_events for p in parts])
        return cls(first.vertices, first.horizon,
                   np.concatenate([p.initial for p in parts]),
                   np.concatenate([p.marks for p in parts]),
                   np.concatenate([[0], np.cumsum(counts)]).astype(np.int64),
                   np.concatenate([p.times for p in parts]),
                   np.concatenate([p.cols for p in parts]),
                   np.concatenate([p.jumps for p in parts]),
                   np.concatenate([p.states for p in parts]),
                   np.concatenate([p.replicates for p in parts]),
                   first.seed, first.frozen)

    @classmethod
    def from_trajectories(cls, trajectories) -> "TrajectoryBatch":
        trajectories = list(trajectories)
        if not trajectories:
            raise InputError("need at least one trajectory")
        first = trajectories[0]
        vertices = first.vertices
        col = {v: i for i, v in enumerate(vertices)}
        initial = np.array([[x.initial[v] for v in vertices] for x in trajectories],
                           dtype=np.int64)
        marks = np.array([[(x.marks or {}).get(v, x.initial[v]) for v in vertices]
                          for x in trajectories])
        counts = [len(x.events) for x in trajectories]
        ev = [e for x in trajectories for e in x.events]
        return cls(vertices, first.horizon, initial, marks,
                   np.concatenate([[0], np.cumsum(counts)]).astype(np.int64),
                   np.array([e.t for e in ev], dtype=np.float64),
                   np.array([col[e.v] for e in ev], dtype=np.int64),
                   np.array([e.j for e in ev], dtype=np.int64),
                   np.array([e.s for e in ev], dtype=np.int64),
                   np.array([x.replicate if x.replicate is not None else i
                             for i, x in enumerate(trajectories)], dtype=np.int64),
                   first.seed, first.frozen)


def _py(x):
    return int(x) if isinstance(x, np.integer) else x


def _initial_states(model: Model, marks: np.ndarray) -> np.ndarray:
    # the map is per mark value, so evaluate it once per distinct mark
    values, inverse = np.unique(marks, return_inverse=True)
    mapped = np.asarray([model.initial_state(_py(m)) for m in values.tolist()], dtype=np.int64)
    return mapped[inverse.ravel()].reshape(marks.shape)


def _simulate_block(g, model, horizon, frozen, seed, reps, marks):
    vertices = g.vertices
    n = len(vertices)
    colof = g.index()
    jumps = np.asarray(model.jump_set, dtype=np.int64)
    nj = len(jumps)
    R = len(reps)
    X = _initial_states(model, marks)
    if model.state_space is not None and not np.isin(X, model.state_space).all():
        raise InputError("an initial state lies outside the state space")
    K = marks
    bounds = np.array([stream_bound(model, g, v, horizon, frozen) for v in vertices])
    nbr_cols = [np.array([colof[u] for u in g.neighbors(v)], dtype=np.int64) for v in vertices]
    is_frozen = np.array([v in frozen for v in vertices])

    col_vertex, col_layer = [], []
    for i, v in enumerate(vertices):
        for layer in range(n_layers(bounds[i])):
            col_vertex.append(i)
            col_layer.append(layer)
    col_vertex = np.asarray(col_vertex, dtype=np.int64)
    col_layer = np.asarray(col_layer, dtype=np.float64)
    C = len(col_vertex)
    empty = np.zeros(0)
    if C == 0:
        z = np.zeros(0, dtype=np.int64)
        return TrajectoryBatch(vertices, horizon, X, K, np.zeros(R + 1, dtype=np.int64),
                               empty, z, z, z, np.asarray(reps, dtype=np.int64), seed,
                               tuple(sorted(frozen)))

    vids = np.asarray(vertices, dtype=np.uint64)
    keys = derive_keys(np.uint64(seed), np.asarray(reps, dtype=np.uint64)[:, None], STREAM_TAG,
                       vids[col_vertex][None, :], col_layer.astype(np.uint64)[None, :])
    idx = np.zeros((R, C), dtype=np.uint64)
    wait, cj, cf = candidate_draws(keys, idx, nj, float(nj))
    next_t = 0.0 + wait

    ev_rows, ev_t, ev_c, ev_j, ev_s = [], [], [], [], []
    live = np.nonzero(next_t.min(axis=1) <= horizon)[0]
    while len(live):
        sub = next_t[live]
        c = sub.argmin(axis=1)
        t = sub[np.arange(len(live)), c]
        ji = cj[live, c]
        level = col_layer[c] + cf[live, c]
        vi = col_vertex[c]
        rate = np.zeros(len(live))
        eligible = level <= bounds[vi]
        for i in np.unique(vi[eligible]):
            sel_v = eligible & (vi == i)
            if is_frozen[i]:
                rate[sel_v] = 1.0
                continue
            for jk in range(nj):
                sel = sel_v & (ji == jk)
                if not sel.any():
                    continue
                rows = live[sel]
                r = model.markov_rate(vertices[i], int(jumps[jk]), X[rows, i],
                                      X[rows][:, nbr_cols[i]], K[rows, i],
                                      K[rows][:, nbr_cols[i]])
                r = np.broadcast_to(np.asarray(r, dtype=np.float64), rows.shape)
                if not np.isfinite(r).all():
                    raise NumericError(f"non-finite rate at vertex {vertices[i]}")
                if (r < 0).any() or (r > bounds[i]).any():
                    raise ModelContractError(
                        f"rate at vertex {vertices[i]} outside [0, {bounds[i]}]")
                rate[sel] = r
        acc = eligible & (level <= rate)
        if acc.any():
            rows = live[acc]
            vcol = vi[acc]
            jv = jumps[ji[acc]]
            new = X[rows, vcol] + jv
            if model.state_space is not None:
                bad = ~is_frozen[vcol] & ~np.isin(new, model.state_space)
                if bad.any():
                    raise ModelContractError("a jump left the state space")
            X[rows, vcol] = new
            ev_rows.append(rows)
            ev_t.append(t[acc])
            ev_c.append(vcol)
            ev_j.append(jv)
            ev_s.append(new)
        # advance the consumed stream
        idx[live, c] += np.uint64(1)
        w, nj_, nf = candidate_draws(keys[live, c], idx[live, c], nj, float(nj))
        next_t[live, c] = t + w
        cj[live, c] = nj_
        cf[live, c] = nf
        live = live[next_t[live].min(axis=1) <= horizon]

    if ev_rows:
        rows = np.concatenate(ev_rows)
        order = np.argsort(rows, kind="stable")
        rows = rows[order]
        arrays = [np.concatenate(a)[order] for a in (ev_t, ev_c, ev_j, ev_s)]
    else:
        rows = np.zeros(0, dtype=np.int64)
        arrays = [empty, rows, rows, rows]
    offsets = np.concatenate([[0], np.cumsum(np.bincount(rows, minlength=R))]).astype(np.int64)
    X0 = _initial_states(model, marks)
    return TrajectoryBatch(vertices, horizon, X0, K, offsets, arrays[0],
                           arrays[1].astype(np.int64), arrays[2].astype(np.int64),
                           arrays[3].astype(np.int64), np.asarray(reps, dtype=np.int64), seed,
                           tuple(sorted(frozen)))


def simulate_batch(g: MarkedGraph, model: Model, horizon: float, frozen=(), n_reps: int = 1,
                   seed: int = 0, marks_sampler=None, replicates=None, threads: int = 1,
                   block: int = BLOCK) -> TrajectoryBatch:
    """Simulate replicates ``0..n_reps-1`` (or the given replicate ids).

    Markov models run vectorised; other models fall back to the scalar
    simulator.  Marks come from ``marks_sampler`` (addressed by replicate)
    or else from ``g``.  The result is identical for every ``threads`` and
    ``block`` setting.
    """
    horizon = check_horizon(horizon)
    seed = check_seed(seed)
    frozen = frozenset(check_vertex_set(frozen, g, "frozen"))
    model.check_graph(g)
    reps = (np.arange(check_positive_int(n_reps, "n_reps"), dtype=np.int64)
            if replicates is None else np.asarray(replicates, dtype=np.int64))
    if marks_sampler is not None:
        marks = marks_sampler.sample(g.vertices, seed, reps)
    else:
        marks = np.array([[g.marks[v] for v in g.vertices]] * len(reps))

    if not model.markovian:
        def one(i):
            gi = g.with_marks({v: _py(m) for v, m in zip(g.vertices, marks[i])})
            return simulate(gi, model, PoissonStreams(seed, int(reps[i])), horizon, frozen)
        if threads > 1:
            with ThreadPoolExecutor(max_workers=threads) as pool:
                trajs = list(pool.map(one, range(len(reps))))
        else:
            trajs = [one(i) for i in range(len(reps))]
        return TrajectoryBatch.from_trajectories(trajs)

    if marks.dtype == object:
        raise UnsupportedModelError("vectorised simulation needs numeric marks")
    starts = range(0, len(reps), block)

    def run(s):
        return _simulate_block(g, model, horizon, frozen, seed, reps[s:s + block],
                               marks[s:s + block])

    if threads > 1 and len(starts) > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            parts = list(pool.map(run, starts))
    else:
        parts = [run(s) for s in starts]
    return TrajectoryBatch.concatenate(parts)
