"""Exact event-driven simulation by Poisson thinning.

Each vertex ``v`` owns a driving Poisson process on time x level x jump
with intensity Leb x Leb x counting.  It is generated in unit-height level
layers: layer ``l`` holds the points with level in ``(l, l + 1]`` and is a
rate-``|J|`` stream of candidates with a uniform jump mark.  A candidate
``(s, level, j)`` at ``v`` becomes a jump of size ``j`` iff
``level <= rate``, where the rate is ``r^v_j`` evaluated on the history
strictly before ``s`` (or ``1`` when ``v`` is frozen, which yields the
reference process).  Only layers below the rate bound are ever generated,
so the cost scales with the bound while the realised driving measure does
not depend on it.

Candidates of all streams are merged in ``(time, vertex, layer, index)``
order.
"""
from __future__ import annotations

import heapq
import json
import math
from dataclasses import dataclass, field
from typing import Iterable, Mapping, NamedTuple

import numpy as np

from .exceptions import InputError, ModelContractError, NumericError, PropernessError
from .graph import MarkedGraph
from .model import History, LocalContext, Model
from .rng import STREAM_TAG, candidate_draws, derive_keys
from .validation import check_horizon, check_seed, check_vertex_set


class Event(NamedTuple):
    t: float
    v: int
    j: int
    s: int


@dataclass(frozen=True)
class Trajectory:
    """Initial states plus time-ordered jump events on ``(0, horizon]``."""

    horizon: float
    initial: Mapping
    events: tuple = ()
    marks: Mapping | None = None
    edges: tuple | None = None
    seed: int | None = None
    replicate: int | None = None
    frozen: tuple = ()

    def __post_init__(self):
        object.__setattr__(self, "events", tuple(Event(*e) for e in self.events))
        current = dict(self.initial)
        prev = 0.0
        for e in self.events:
            if not (0.0 < e.t <= self.horizon):
                raise InputError(f"event time {e.t} outside (0, {self.horizon}]")
            if e.t < prev:
                raise InputError("events must be sorted by time")
            if e.v not in current:
                raise InputError(f"event at unknown vertex {e.v}")
            if current[e.v] + e.j != e.s:
                raise InputError(
                    f"inconsistent event at t={e.t}: {current[e.v]} + {e.j} != {e.s}")
            current[e.v] = e.s
            prev = e.t

    @property
    def vertices(self) -> tuple:
        return tuple(sorted(self.initial))

    @property
    def is_proper(self) -> bool:
        return all(a.t < b.t for a, b in zip(self.events, self.events[1:]))

    def final_states(self) -> dict:
        cur = dict(self.initial)
        for e in self.events:
            cur[e.v] = e.s
        return cur

    def state_at(self, v: int, t: float, left: bool = False) -> int:
        """``x_v(t)``, or the left limit ``x_v(t-)`` when ``left``."""
        x = self.initial[v]
        for e in self.events:
            if e.t > t or (left and e.t == t):
                break
            if e.v == v:
                x = e.s
        return x

    def events_of(self, vertices: Iterable[int]) -> tuple:
        keep = set(vertices)
        return tuple(e for e in self.events if e.v in keep)

    def restrict(self, vertices: Iterable[int]) -> "Trajectory":
        keep = set(vertices)
        return Trajectory(self.horizon, {v: x for v, x in self.initial.items() if v in keep},
                          self.events_of(keep),
                          None if self.marks is None else
                          {v: m for v, m in self.marks.items() if v in keep},
                          None, self.seed, self.replicate,
                          tuple(v for v in self.frozen if v in keep))

    def history(self) -> History:
        h = History(self.initial)
        for e in self.events:
            h.append(e.v, e.t, e.s)
        return h

    # -- JSONL ----------------------------------------------------------

    def to_jsonl(self) -> str:
        header = {"horizon": self.horizon,
                  "initial": {str(v): x for v, x in sorted(self.initial.items())},
                  "seed": self.seed}
        if self.replicate is not None:
            header["replicate"] = self.replicate
        if self.frozen:
            header["frozen"] = list(self.frozen)
        if self.marks is not None:
            header["marks"] = {str(v): m for v, m in sorted(self.marks.items())}
        if self.edges is not None:
            header["edges"] = [list(e) for e in self.edges]
        lines = [json.dumps(header)]
        lines += [json.dumps({"t": e.t, "v": e.v, "j": e.j, "s": e.s}) for e in self.events]
        return "\n".join(lines) + "\n"

    @classmethod
    def from_jsonl(cls, text: str) -> "Trajectory":
        lines = [ln for ln in text.splitlines() if ln.strip()]
        if not lines:
            raise InputError("empty trajectory log")
        try:
            header = json.loads(lines[0])
            events = [json.loads(ln) for ln in lines[1:]]
            initial = {int(k): int(x) for k, x in header["initial"].items()}
            marks = header.get("marks")
            if marks is not None:
                marks = {int(k): m for k, m in marks.items()}
            edges = header.get("edges")
            return cls(float(header["horizon"]), initial,
                       tuple(Event(float(e["t"]), int(e["v"]), int(e["j"]), int(e["s"]))
                             for e in events),
                       marks, None if edges is None else tuple(tuple(e) for e in edges),
                       header.get("seed"), header.get("replicate"),
                       tuple(header.get("frozen", ())))
        except (json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
            raise InputError(f"malformed trajectory log: {exc}") from None


def save_trajectory(x: Trajectory, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(x.to_jsonl())


def load_trajectory(path) -> Trajectory:
    with open(path, encoding="utf-8") as fh:
        return Trajectory.from_jsonl(fh.read())


class JumpTriple(NamedTuple):
    t: float
    j: int
    v: int


@dataclass(frozen=True)
class JumpCharacteristics:
    triples: tuple = ()

    def __len__(self):
        return len(self.triples)

    def __iter__(self):
        return iter(self.triples)


@dataclass(frozen=True)
class DualPointProcess:
    """Simple counting measure on (0, T] x J x U with atoms at the jump triples."""

    points: tuple = ()
    vertices: frozenset = field(default_factory=frozenset)

    def count(self, t0: float = 0.0, t1: float = math.inf, jumps=None, vertices=None) -> int:
        """Number of atoms in ``(t0, t1] x jumps x vertices``."""
        return sum(1 for p in self.points if t0 < p.t <= t1
                   and (jumps is None or p.j in jumps)
                   and (vertices is None or p.v in vertices))

    def restrict(self, vertices: Iterable[int]) -> "DualPointProcess":
        keep = frozenset(vertices)
        return DualPointProcess(tuple(p for p in self.points if p.v in keep), keep)

    @property
    def total(self) -> int:
        return len(self.points)


def jump_characteristics(x: Trajectory, u: Iterable[int] | None = None) -> JumpCharacteristics:
    """Time-ordered ``(t, j, v)`` triples of the events of ``x`` at vertices ``u``."""
    if not x.is_proper:
        raise PropernessError("trajectory has two events at the same time")
    keep = set(x.initial) if u is None else set(check_vertex_set(u, x.initial, "u"))
    return JumpCharacteristics(tuple(JumpTriple(e.t, e.j, e.v) for e in x.events if e.v in keep))


def dual(x: Trajectory, u: Iterable[int] | None = None) -> DualPointProcess:
    keep = frozenset(x.initial) if u is None else frozenset(check_vertex_set(u, x.initial, "u"))
    return DualPointProcess(jump_characteristics(x, keep).triples, keep)


# -- driving streams ---------------------------------------------------------

def n_layers(bound: float) -> int:
    return int(math.ceil(bound)) if bound > 0 else 0


def stream_bound(model: Model, g: MarkedGraph, v: int, horizon: float, frozen) -> float:
    """Thinning bound used at ``v``: the model bound, or 1 for frozen vertices."""
    if v in frozen:
        return 1.0
    return float(model.rate_bound(len(g.closure_of(v)), horizon))


class PoissonStreams:
    """Driving Poisson processes of one replicate.

    Stream ``(v, layer)`` is keyed by ``(master_seed, replicate, v, layer)``;
    nothing else about the simulation enters the key.
    """

    chunk = 16

    def __init__(self, master_seed: int, replicate: int = 0):
        self.master_seed = check_seed(master_seed)
        self.replicate = int(replicate)

    def key(self, v: int, layer: int) -> np.uint64:
        return derive_keys(np.uint64(self.master_seed), np.uint64(self.replicate),
                           STREAM_TAG, np.uint64(v), np.uint64(layer))

    def candidates(self, v: int, layer: int, n_jumps: int):
        """Yield ``(time, jump_index, level_fraction, index)`` in time order."""
        key = self.key(v, layer)
        t = 0.0
        start = 0
        while True:
            idx = np.arange(start, start + self.chunk, dtype=np.uint64)
            wait, jidx, frac = candidate_draws(np.full(self.chunk, key, dtype=np.uint64), idx,
                                               n_jumps, float(n_jumps))
            for k in range(self.chunk):
                t = t + wait[k]
                yield float(t), int(jidx[k]), float(frac[k]), start + k
            start += self.chunk


def simulate(g: MarkedGraph, model: Model, streams: PoissonStreams, horizon: float,
             frozen: Iterable[int] = ()) -> Trajectory:
    """Solve the thinning SDE on ``g`` up to ``horizon``.

    Vertices in ``frozen`` jump at unit rate for every jump type, ignoring
    the model; with ``frozen`` empty this is the target process.
    """
    horizon = check_horizon(horizon)
    frozen = frozenset(check_vertex_set(frozen, g, "frozen"))
    model.check_graph(g)
    jumps = model.jump_set
    nj = len(jumps)
    initial = {v: model.initial_state(g.marks[v]) for v in g.vertices}
    for v, x in initial.items():
        if not model.in_state_space(x):
            raise InputError(f"initial state {x} of vertex {v} is outside the state space")
    hist = History(initial)
    current = dict(initial)
    closures = {v: g.closure_of(v) for v in g.vertices}
    bounds = {v: stream_bound(model, g, v, horizon, frozen) for v in g.vertices}

    heap = []
    gens = {}
    for v in g.vertices:
        for layer in range(n_layers(bounds[v])):
            it = streams.candidates(v, layer, nj)
            gens[v, layer] = it
            t, ji, frac, k = next(it)
            heap.append((t, v, layer, k, ji, frac))
    heapq.heapify(heap)

    events = []
    while heap and heap[0][0] <= horizon:
        t, v, layer, k, ji, frac = heapq.heappop(heap)
        nt, nji, nfrac, nk = next(gens[v, layer])
        heapq.heappush(heap, (nt, v, layer, nk, nji, nfrac))
        level = layer + frac
        bound = bounds[v]
        if level > bound:
            continue
        j = jumps[ji]
        if v in frozen:
            rate = 1.0
        else:
            rate = model.rate(t, v, j, LocalContext(v, t, closures[v], g.marks, hist))
            if not math.isfinite(rate):
                raise NumericError(f"rate r^{v}_{j}({t}) is not finite")
            if rate < 0 or rate > bound:
                raise ModelContractError(
                    f"rate r^{v}_{j}({t}) = {rate} outside [0, {bound}]")
        if level <= rate:
            new = current[v] + j
            if v not in frozen and not model.in_state_space(new):
                raise ModelContractError(
                    f"jump {j} at vertex {v} leaves the state space (state {current[v]})")
            current[v] = new
            hist.append(v, t, new)
            events.append(Event(t, v, j, new))
    return Trajectory(horizon, initial, tuple(events), dict(g.marks),
                      tuple(sorted(g.edges)), streams.master_seed, streams.replicate,
                      tuple(sorted(frozen)))


def replicate(g: MarkedGraph, model: Model, horizon: float, frozen: Iterable[int] = (),
              n_reps: int = 1, master_seed: int = 0, marks_sampler=None,
              threads: int = 1) -> list:
    """``n_reps`` independent trajectories; replicate ``k`` uses stream ``(seed, k)``.

    With a ``marks_sampler`` each replicate draws its own marks from the
    same ``(seed, k)`` address.  Output does not depend on ``threads``.
    """
    from .validation import check_positive_int
    n_reps = check_positive_int(n_reps, "n_reps")
    master_seed = check_seed(master_seed)

    def one(k):
        gk = g
        if marks_sampler is not None:
            gk = g.with_marks(marks_sampler.sample_one(g.vertices, master_seed, k))
        return simulate(gk, model, PoissonStreams(master_seed, k), horizon, frozen)

    if threads <= 1:
        return [one(k) for k in range(n_reps)]
    from concurrent.futures import ThreadPoolExecutor
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(one, range(n_reps)))
