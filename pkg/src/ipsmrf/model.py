"""Jump-rate models.

A model supplies, for every vertex ``v`` and jump ``j`` of its finite jump
set, a nonnegative rate ``r^v_j(t, marks, history)``.  Rates never see the
global configuration: they receive a :class:`LocalContext` that only
exposes marks and the left-limit history on the closed neighbourhood of
``v``, strictly before ``t``.  Locality and predictability are therefore
properties of the interface rather than of each model's good behaviour.

Markovian models additionally implement :meth:`MarkovModel.markov_rate`,
a vectorised function of the current states and marks on ``cl(v)``.  The
batch simulator, the Girsanov batch weights and the exact CTMC oracle are
built on it.
"""
from __future__ import annotations

import bisect
import json
import math
from dataclasses import dataclass
from typing import Mapping

import numpy as np

from .exceptions import InputError, ModelContractError, NumericError

PIECEWISE_CONSTANT = "piecewise_constant"


@dataclass(frozen=True)
class TimeVarying:
    """Rate kind for models whose rates move between local events."""

    quadrature_tolerance: float = 1e-9


class History:
    """Mutable per-vertex event store: initial state plus (time, state) lists."""

    __slots__ = ("initial", "times", "states")

    def __init__(self, initial: Mapping[int, int]):
        self.initial = dict(initial)
        self.times = {v: [] for v in self.initial}
        self.states = {v: [] for v in self.initial}

    def append(self, v, t, new_state):
        self.times[v].append(t)
        self.states[v].append(new_state)


class LocalContext:
    """Read-only view of marks and history on ``cl(v)`` over ``[0, t)``."""

    __slots__ = ("v", "t", "closure", "_marks", "_history")

    def __init__(self, v: int, t: float, closure: tuple, marks: Mapping, history: History):
        self.v = v
        self.t = t
        self.closure = closure
        self._marks = marks
        self._history = history

    def _check(self, u):
        if u not in self.closure:
            raise ModelContractError(
                f"rate of vertex {self.v} read vertex {u} outside its closure {self.closure}")

    @property
    def neighbors(self) -> tuple:
        return tuple(u for u in self.closure if u != self.v)

    def mark(self, u: int):
        self._check(u)
        return self._marks[u]

    def initial(self, u: int) -> int:
        self._check(u)
        return self._history.initial[u]

    def _count(self, u):
        return bisect.bisect_left(self._history.times[u], self.t)

    def state(self, u: int) -> int:
        """Left limit ``x_u(t-)``."""
        self._check(u)
        k = self._count(u)
        return self._history.states[u][k - 1] if k else self._history.initial[u]

    def jump_times(self, u: int) -> tuple:
        self._check(u)
        return tuple(self._history.times[u][:self._count(u)])

    def last_jump_time(self, u: int):
        self._check(u)
        k = self._count(u)
        return self._history.times[u][k - 1] if k else None


class Model:
    """Base class for rate models.

    Subclasses set ``jump_set``, ``state_space`` (a tuple, or ``None`` for all
    integers) and ``rate_kind`` and implement :meth:`rate` and
    :meth:`rate_bound`.
    """

    name = "model"
    jump_set: tuple = ()
    state_space: tuple | None = None
    rate_kind = PIECEWISE_CONSTANT
    markovian = False

    def rate(self, t: float, v: int, j: int, ctx: LocalContext) -> float:
        raise NotImplementedError

    def rate_bound(self, closure_size: int, horizon: float) -> float:
        raise NotImplementedError

    def initial_state(self, mark) -> int:
        """The initial-condition map from a mark to a state (identity here)."""
        if isinstance(mark, bool) or not isinstance(mark, (int, np.integer)):
            raise InputError(f"{self.name}: marks must be integer states, got {mark!r}")
        return int(mark)

    def check_graph(self, g) -> None:
        """Hook for models that only make sense on particular graphs."""

    def validation_graphs(self, max_degree: int):
        from .graph import MarkedGraph
        for d in range(0, max_degree + 1):
            yield MarkedGraph.from_edges(range(d + 1), [(0, k) for k in range(1, d + 1)])

    def mark_values(self) -> tuple:
        return tuple(self.state_space) if self.state_space is not None else (-2, -1, 0, 1, 2)

    def in_state_space(self, x: int) -> bool:
        return self.state_space is None or x in self.state_space

    def get_params(self) -> dict:
        return {}

    def to_config(self) -> dict:
        return {"name": self.name, "params": self.get_params()}

    def __repr__(self):
        params = ", ".join(f"{k}={v!r}" for k, v in self.get_params().items())
        return f"{type(self).__name__}({params})"


class MarkovModel(Model):
    """Model whose rates depend only on current states and marks on cl(v)."""

    markovian = True

    def markov_rate(self, v, j, x_v, x_nbrs, xi_v, xi_nbrs):
        """Vectorised rate.

        ``x_v`` and ``xi_v`` have shape ``(R,)``; ``x_nbrs`` and ``xi_nbrs``
        have shape ``(R, deg(v))`` with columns in increasing neighbour id.
        """
        raise NotImplementedError

    def rate(self, t, v, j, ctx):
        nbrs = ctx.neighbors
        x_v = np.array([ctx.state(v)])
        x_n = np.array([[ctx.state(u) for u in nbrs]], dtype=np.int64).reshape(1, len(nbrs))
        xi_v = np.array([ctx.mark(v)])
        xi_n = np.array([[ctx.mark(u) for u in nbrs]]).reshape(1, len(nbrs))
        return float(self.markov_rate(v, j, x_v, x_n, xi_v, xi_n)[0])


def eval_rate(model: Model, t: float, v: int, j: int, ctx: LocalContext,
              bound: float | None = None) -> float:
    """Evaluate ``r^v_j`` with contract checks.

    When ``bound`` is given the value is also checked against it.
    """
    if j not in model.jump_set:
        raise InputError(f"jump {j} is not in the jump set {model.jump_set}")
    r = model.rate(t, v, j, ctx)
    if not math.isfinite(r):
        raise NumericError(f"rate r^{v}_{j}({t}) is not finite: {r}")
    if r < 0:
        raise ModelContractError(f"rate r^{v}_{j}({t}) is negative: {r}")
    if bound is not None and r > bound:
        raise ModelContractError(f"rate r^{v}_{j}({t}) = {r} exceeds its bound {bound}")
    return r


# -- built-in models -------------------------------------------------------

def _count(x_nbrs, value):
    return np.count_nonzero(np.asarray(x_nbrs) == value, axis=1).astype(np.float64)


class ConstantBirthDeath(MarkovModel):
    """Two-state chain: 0 -> 1 at rate ``a``, 1 -> 0 at rate ``b``; no interaction."""

    name = "constant_birth_death"
    jump_set = (1, -1)
    state_space = (0, 1)

    def __init__(self, a: float, b: float):
        self.a, self.b = float(a), float(b)

    def markov_rate(self, v, j, x_v, x_nbrs, xi_v, xi_nbrs):
        if j == 1:
            return np.where(x_v == 0, self.a, 0.0)
        return np.where(x_v == 1, self.b, 0.0)

    def rate_bound(self, closure_size, horizon):
        return max(self.a, self.b)

    def get_params(self):
        return {"a": self.a, "b": self.b}


class Contact(MarkovModel):
    """Contact process: infection at ``lambda`` per infected neighbour, recovery at ``mu``."""

    name = "contact"
    jump_set = (1, -1)
    state_space = (0, 1)

    def __init__(self, lam: float, mu: float):
        self.lam, self.mu = float(lam), float(mu)

    def markov_rate(self, v, j, x_v, x_nbrs, xi_v, xi_nbrs):
        if j == 1:
            return np.where(x_v == 0, self.lam * _count(x_nbrs, 1), 0.0)
        return np.where(x_v == 1, self.mu, 0.0)

    def rate_bound(self, closure_size, horizon):
        return max(self.lam * (closure_size - 1), self.mu)

    def get_params(self):
        return {"lambda": self.lam, "mu": self.mu}


class SIR(MarkovModel):
    """Susceptible (0) -> infected (1) -> recovered (2)."""

    name = "sir"
    jump_set = (1,)
    state_space = (0, 1, 2)

    def __init__(self, beta: float, gamma: float):
        self.beta, self.gamma = float(beta), float(gamma)

    def markov_rate(self, v, j, x_v, x_nbrs, xi_v, xi_nbrs):
        infect = self.beta * _count(x_nbrs, 1)
        return np.where(x_v == 0, infect, np.where(x_v == 1, self.gamma, 0.0))

    def rate_bound(self, closure_size, horizon):
        return max(self.beta * (closure_size - 1), self.gamma)

    def get_params(self):
        return {"beta": self.beta, "gamma": self.gamma}


class GlauberIsing(MarkovModel):
    """Heat-bath Glauber dynamics for +-1 spins; a flip is a jump of -2x."""

    name = "glauber_ising"
    jump_set = (-2, 2)
    state_space = (-1, 1)

    def __init__(self, beta: float, h: float = 0.0):
        self.beta, self.h = float(beta), float(h)

    def markov_rate(self, v, j, x_v, x_nbrs, xi_v, xi_nbrs):
        field = self.h + np.asarray(x_nbrs, dtype=np.float64).sum(axis=1)
        # only the flip away from the current spin is possible
        current = -j // 2
        flip = 1.0 / (1.0 + np.exp(2.0 * self.beta * current * field))
        return np.where(x_v == current, flip, 0.0)

    def rate_bound(self, closure_size, horizon):
        return 1.0

    def get_params(self):
        return {"beta": self.beta, "h": self.h}


class VoterRate(MarkovModel):
    """Voter model: adopt a uniformly chosen neighbour's opinion at ``rate``."""

    name = "voter_rate"
    jump_set = (1, -1)
    state_space = (0, 1)

    def __init__(self, rate: float = 1.0):
        self.rate_ = float(rate)

    def markov_rate(self, v, j, x_v, x_nbrs, xi_v, xi_nbrs):
        deg = np.asarray(x_nbrs).shape[1]
        if deg == 0:
            return np.zeros(np.shape(x_v))
        if j == 1:
            return np.where(x_v == 0, self.rate_ * _count(x_nbrs, 1) / deg, 0.0)
        return np.where(x_v == 1, self.rate_ * _count(x_nbrs, 0) / deg, 0.0)

    def rate_bound(self, closure_size, horizon):
        return self.rate_

    def get_params(self):
        return {"rate": self.rate_}


class Counterexample(MarkovModel):
    """Three-vertex model on the path 1-2-3 whose trajectories are not a 1-MRF.

    Vertices 1 and 3 never move.  Vertex 2 jumps from 0 to 1 at unit rate,
    but only when the initial states of 1 and 3 differ.  Marks are initial
    states (identity initial map), so "initial state of a neighbour" is
    read from its mark.
    """

    name = "counterexample"
    jump_set = (1,)
    state_space = (0, 1)

    def markov_rate(self, v, j, x_v, x_nbrs, xi_v, xi_nbrs):
        if v != 2:
            return np.zeros(np.shape(x_v))
        xi_nbrs = np.asarray(xi_nbrs)
        differ = xi_nbrs[:, 0] != xi_nbrs[:, 1]
        return np.where(differ & (x_v == 0), 1.0, 0.0)

    def rate_bound(self, closure_size, horizon):
        return 1.0

    def check_graph(self, g):
        if g.vertices != (1, 2, 3) or g.edges != frozenset({(1, 2), (2, 3)}):
            raise InputError("the counterexample model lives on the path 1-2-3")

    def validation_graphs(self, max_degree):
        yield counterexample_graph()


class DelayedSIR(Model):
    """SIR whose recovery hazard ramps up with time since infection.

    Recovery rate of an infected vertex infected at time ``s`` (``s = 0`` for
    initially infected ones) is ``gamma * (1 - exp(-(t - s) / delay))``.  The
    rate moves between events, so the model is declared time-varying, and it
    reads the past (infection time), so it is not Markov in the states.
    """

    name = "delayed_sir"
    jump_set = (1,)
    state_space = (0, 1, 2)

    def __init__(self, beta: float, gamma: float, delay: float = 1.0,
                 quadrature_tolerance: float = 1e-10):
        self.beta, self.gamma, self.delay = float(beta), float(gamma), float(delay)
        self.rate_kind = TimeVarying(float(quadrature_tolerance))

    def rate(self, t, v, j, ctx):
        x = ctx.state(v)
        if x == 0:
            return self.beta * sum(1 for u in ctx.neighbors if ctx.state(u) == 1)
        if x == 1:
            since = ctx.last_jump_time(v) or 0.0
            return self.gamma * -math.expm1(-(t - since) / self.delay)
        return 0.0

    def rate_bound(self, closure_size, horizon):
        return max(self.beta * (closure_size - 1), self.gamma)

    def get_params(self):
        return {"beta": self.beta, "gamma": self.gamma, "delay": self.delay,
                "quadrature_tolerance": self.rate_kind.quadrature_tolerance}


def make_counterexample_model() -> Counterexample:
    return Counterexample()


def counterexample_graph(xi1: int = 1, xi3: int = 0):
    from .graph import path_graph
    return path_graph(3, start=1, marks={1: xi1, 2: 0, 3: xi3})


_BUILTINS = {
    "contact": (Contact, {"lambda": "lam", "mu": "mu"}, ()),
    "sir": (SIR, {"beta": "beta", "gamma": "gamma"}, ()),
    "glauber_ising": (GlauberIsing, {"beta": "beta", "h": "h"}, ("h",)),
    "voter_rate": (VoterRate, {"rate": "rate"}, ("rate",)),
    "constant_birth_death": (ConstantBirthDeath, {"a": "a", "b": "b"}, ()),
    "delayed_sir": (DelayedSIR, {"beta": "beta", "gamma": "gamma", "delay": "delay",
                                 "quadrature_tolerance": "quadrature_tolerance"},
                    ("delay", "quadrature_tolerance")),
    "counterexample": (Counterexample, {}, ()),
}


def make_builtin(name: str, params: Mapping | None = None) -> Model:
    """Instantiate a built-in model from its config name and parameters."""
    params = dict(params or {})
    try:
        cls, names, optional = _BUILTINS[name]
    except KeyError:
        raise InputError(f"unknown model {name!r}; choose from {sorted(_BUILTINS)}") from None
    unknown = set(params) - set(names)
    if unknown:
        raise InputError(f"model {name}: unknown parameter(s) {sorted(unknown)}")
    missing = [p for p in names if p not in params and p not in optional]
    if missing:
        raise InputError(f"model {name}: missing parameter(s) {missing}")
    kwargs = {}
    for key, value in params.items():
        try:
            value = float(value)
        except (TypeError, ValueError):
            raise InputError(f"model {name}: parameter {key} must be a number") from None
        if not math.isfinite(value) or (value < 0 and key != "h"):
            raise InputError(f"model {name}: parameter {key} must be finite and >= 0")
        kwargs[names[key]] = value
    return cls(**kwargs)


def model_from_config(config: Mapping) -> Model:
    if not isinstance(config, Mapping) or "name" not in config:
        raise InputError("model config needs a 'name' field")
    return make_builtin(config["name"], config.get("params"))


def load_model(path) -> Model:
    with open(path, encoding="utf-8") as fh:
        try:
            config = json.load(fh)
        except json.JSONDecodeError as exc:
            raise InputError(f"{path}: not valid JSON ({exc})") from None
    return model_from_config(config)


# -- contract checking -----------------------------------------------------

def _random_history(model, g, rng, horizon):
    marks = {v: model.mark_values()[rng.integers(len(model.mark_values()))] for v in g.vertices}
    initial = {v: model.initial_state(marks[v]) for v in g.vertices}
    hist = History(initial)
    for v in g.vertices:
        x = initial[v]
        for t in np.sort(rng.uniform(0, horizon, size=rng.integers(0, 4))):
            options = [j for j in model.jump_set if model.in_state_space(x + j)]
            if not options:
                break
            x += options[rng.integers(len(options))]
            hist.append(v, float(t), x)
    return marks, hist


def validate_model(model: Model, n_trials: int = 200, seed: int = 0, max_degree: int = 4,
                   horizon: float = 2.0) -> list:
    """Fuzz a model against the rate contract; return a list of violations.

    Checks bound, nonnegativity, predictability (events at or after ``t``
    do not change the rate), piecewise constancy where declared, and
    monotonicity of the bound in both arguments.
    """
    rng = np.random.default_rng(seed)
    problems = []
    sizes = range(1, max_degree + 2)
    times = np.linspace(0.0, horizon, 5)
    for d in sizes:
        for a, b in zip(times, times[1:]):
            if model.rate_bound(d, a) > model.rate_bound(d, b):
                problems.append(f"rate_bound({d}, t) decreases between t={a} and t={b}")
        if d > 1 and model.rate_bound(d - 1, horizon) > model.rate_bound(d, horizon):
            problems.append(f"rate_bound(d, {horizon}) decreases from d={d - 1} to d={d}")
    graphs = list(model.validation_graphs(max_degree))
    for trial in range(n_trials):
        g = graphs[trial % len(graphs)]
        marks, hist = _random_history(model, g, rng, horizon)
        v = g.vertices[rng.integers(len(g))]
        cl = g.closure_of(v)
        t = float(rng.uniform(1e-6, horizon))
        for j in model.jump_set:
            ctx = LocalContext(v, t, cl, marks, hist)
            try:
                r = eval_rate(model, t, v, j, ctx, bound=model.rate_bound(len(cl), t))
            except (ModelContractError, NumericError) as exc:
                problems.append(str(exc))
                continue
            # an event at t itself must be invisible to the rate at t
            probe = History(hist.initial)
            for u in g.vertices:
                for s, x in zip(hist.times[u], hist.states[u]):
                    if s < t:
                        probe.append(u, s, x)
            w = cl[rng.integers(len(cl))]
            last = probe.states[w][-1] if probe.states[w] else probe.initial[w]
            probe.append(w, t, last + model.jump_set[0])
            if model.rate(t, v, j, LocalContext(v, t, cl, marks, probe)) != r:
                problems.append(f"rate r^{v}_{j} at t={t} depends on an event at time t")
            if model.rate_kind == PIECEWISE_CONSTANT:
                events = sorted(s for u in cl for s in hist.times[u])
                k = bisect.bisect_left(events, t)
                lo = events[k - 1] if k else 0.0
                hi = events[k] if k < len(events) else horizon
                if hi > lo:
                    s1, s2 = (float(x) for x in rng.uniform(lo, hi, size=2))
                    r1 = model.rate(max(s1, 1e-12), v, j, LocalContext(v, max(s1, 1e-12), cl, marks, hist))
                    r2 = model.rate(max(s2, 1e-12), v, j, LocalContext(v, max(s2, 1e-12), cl, marks, hist))
                    if r1 != r2:
                        problems.append(
                            f"piecewise-constant rate r^{v}_{j} changes between events ({s1}, {s2})")
    return problems
