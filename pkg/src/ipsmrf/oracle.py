"""Exact desk-scale ground truth for Markov models on tiny graphs.

* :class:`ConfigurationChain` enumerates the configurations reachable from
  an initial support and assembles the generator of the joint process.
* :func:`transient_distribution` and :func:`grid_path_law` evaluate laws by
  uniformization with a certified Poisson truncation.
* :func:`conditional_mutual_information` quantifies conditional
  independence of coordinate blocks of a finite pmf.
* :func:`check_factorization_ci` checks that tilting a conditionally
  independent pmf by a factorised density keeps it conditionally
  independent.
"""
from __future__ import annotations

import hashlib
import itertools
import math
from collections import deque
from dataclasses import dataclass
from typing import Callable, Mapping, Sequence

import numpy as np
from scipy import sparse, stats

from .exceptions import CapacityError, InputError, PreconditionError, UnsupportedModelError
from .graph import MarkedGraph
from .model import Model

DEFAULT_STATE_CAP = 10_000
DEFAULT_SUPPORT_CAP = 1_000_000
TRUNCATION_TOL = 1e-12


@dataclass(frozen=True)
class FinitePMF:
    """Finite pmf whose atoms are integer tuples (rows of ``atoms``)."""

    atoms: np.ndarray
    probs: np.ndarray
    names: tuple = ()

    def __post_init__(self):
        atoms = np.asarray(self.atoms)
        if atoms.ndim == 1:
            atoms = atoms[:, None]
        probs = np.asarray(self.probs, dtype=np.float64)
        if len(atoms) != len(probs):
            raise InputError("atoms and probabilities differ in length")
        if (probs < 0).any():
            raise InputError("negative probability")
        total = math.fsum(probs.tolist())
        if abs(total - 1.0) > 1e-12:
            raise InputError(f"probabilities sum to {total}, not 1")
        names = tuple(self.names) if self.names else tuple(range(atoms.shape[1]))
        if len(names) != atoms.shape[1]:
            raise InputError("one name per coordinate is required")
        object.__setattr__(self, "atoms", atoms)
        object.__setattr__(self, "probs", probs)
        object.__setattr__(self, "names", names)

    @classmethod
    def point_mass(cls, atom, names=()):
        return cls(np.asarray([atom]), np.array([1.0]), names)

    @classmethod
    def from_dict(cls, mapping: Mapping, names=()):
        atoms = list(mapping)
        return cls(np.asarray(atoms), np.array([mapping[a] for a in atoms]), names)

    @classmethod
    def from_array(cls, array: np.ndarray, names=()):
        """pmf over index tuples of a dense nonnegative array summing to one."""
        array = np.asarray(array, dtype=np.float64)
        idx = np.nonzero(array > 0)
        return cls(np.stack(idx, axis=1), array[idx], names)

    def __len__(self):
        return len(self.probs)

    def as_dict(self) -> dict:
        out = {}
        for a, p in zip(map(tuple, self.atoms.tolist()), self.probs):
            out[a] = out.get(a, 0.0) + p
        return out

    def coords(self, names) -> list:
        lookup = {n: i for i, n in enumerate(self.names)}
        try:
            return [lookup[n] for n in names]
        except KeyError as exc:
            raise InputError(f"unknown coordinate {exc.args[0]!r}") from None

    def marginal(self, coords: Sequence[int]) -> "FinitePMF":
        coords = list(coords)
        sub = self.atoms[:, coords]
        if not coords:
            return FinitePMF(np.zeros((1, 0), dtype=np.int64), np.array([1.0]), ())
        uniq, inv = np.unique(sub, axis=0, return_inverse=True)
        probs = np.bincount(inv.ravel(), weights=self.probs, minlength=len(uniq))
        probs = probs / math.fsum(probs.tolist())
        return FinitePMF(uniq, probs, tuple(self.names[c] for c in coords))

    def checksum(self, digits: int = 12) -> str:
        order = np.lexsort(self.atoms.T[::-1]) if self.atoms.shape[1] else np.arange(len(self))
        h = hashlib.sha256()
        for a, p in zip(self.atoms[order].tolist(), self.probs[order]):
            h.update(f"{a}:{p:.{digits}e};".encode())
        return h.hexdigest()


class ConfigurationChain:
    """Finite generator on the configurations reachable from ``initial``.

    Only Markov models are admitted; the rates are evaluated at fixed marks.
    """

    def __init__(self, g: MarkedGraph, model: Model, initial_configs, marks=None,
                 cap: int = DEFAULT_STATE_CAP):
        if not model.markovian:
            raise UnsupportedModelError("the exact oracle needs a Markov model")
        model.check_graph(g)
        self.graph = g
        self.model = model
        self.vertices = g.vertices
        marks = dict(g.marks if marks is None else marks)
        self.marks = marks
        colof = g.index()
        nbr_cols = [np.array([colof[u] for u in g.neighbors(v)], dtype=np.int64)
                    for v in g.vertices]
        mark_row = np.array([marks[v] for v in g.vertices])

        states = []
        index = {}
        for c in initial_configs:
            c = tuple(int(x) for x in c)
            if len(c) != len(g.vertices):
                raise InputError("configuration length differs from the vertex count")
            if c not in index:
                index[c] = len(states)
                states.append(c)
        if len(states) > cap:
            raise CapacityError(f"more than {cap} initial configurations")
        rows, cols, vals = [], [], []
        frontier = deque(range(len(states)))
        while frontier:
            batch = [frontier.popleft() for _ in range(len(frontier))]
            X = np.array([states[i] for i in batch], dtype=np.int64)
            K = np.broadcast_to(mark_row, (len(batch), len(mark_row)))
            for vi, v in enumerate(g.vertices):
                nb = nbr_cols[vi]
                for j in model.jump_set:
                    r = np.broadcast_to(np.asarray(
                        model.markov_rate(v, j, X[:, vi], X[:, nb], K[:, vi], K[:, nb]),
                        dtype=np.float64), (len(batch),))
                    for src, rate in zip(batch, r):
                        if rate <= 0:
                            continue
                        dst = list(states[src])
                        dst[vi] += j
                        dst = tuple(dst)
                        if dst not in index:
                            if len(states) >= cap:
                                raise CapacityError(f"more than {cap} reachable configurations")
                            index[dst] = len(states)
                            states.append(dst)
                            frontier.append(index[dst])
                        rows.append(src)
                        cols.append(index[dst])
                        vals.append(float(rate))
        n = len(states)
        Q = sparse.coo_matrix((vals, (rows, cols)), shape=(n, n)).tocsr()
        exit_rates = np.asarray(Q.sum(axis=1)).ravel()
        self.generator = (Q - sparse.diags(exit_rates)).tocsr()
        self.exit_rates = exit_rates
        self.states = states
        self.index = index

    def __len__(self):
        return len(self.states)

    def vector(self, pmf: FinitePMF) -> np.ndarray:
        p = np.zeros(len(self.states))
        for atom, prob in zip(map(tuple, pmf.atoms.tolist()), pmf.probs):
            if atom not in self.index:
                raise InputError(f"configuration {atom} is not a state of the chain")
            p[self.index[atom]] += prob
        return p

    def names(self, tag=None) -> tuple:
        return tuple(("x", v) if tag is None else ("x", v, tag) for v in self.vertices)


def _poisson_weights(rate_t: float):
    kmax = int(stats.poisson.isf(TRUNCATION_TOL, rate_t)) + 1
    w = stats.poisson.pmf(np.arange(kmax + 1), rate_t)
    return w / math.fsum(w.tolist())


def _uniformized(chain: ConfigurationChain, p: np.ndarray, t: float) -> np.ndarray:
    """Apply ``exp(tQ)`` to a row vector or to the rows of a matrix."""
    lam = float(chain.exit_rates.max(initial=0.0))
    if t == 0 or lam == 0:
        return p.copy()
    Pt = (sparse.identity(len(chain), format="csr") + chain.generator / lam).T.tocsr()
    weights = _poisson_weights(lam * t)
    v = p.T.copy()
    out = weights[0] * v
    for wk in weights[1:]:
        v = Pt @ v
        out = out + wk * v
    return np.maximum(out.T, 0.0)


def transient_distribution(chain: ConfigurationChain, initial: FinitePMF, t: float) -> FinitePMF:
    """Law of the configuration at time ``t`` started from ``initial``.

    Truncation of the uniformization series drops Poisson mass below 1e-12
    and is renormalised, keeping the total error far below 1e-10.
    """
    if t < 0:
        raise InputError("t must be nonnegative")
    if t == 0:
        return initial
    p = _uniformized(chain, chain.vector(initial), t)
    p = p / math.fsum(p.tolist())
    keep = p > 0
    return FinitePMF(np.array(chain.states, dtype=np.int64)[keep], p[keep], chain.names())


def transition_matrix(chain: ConfigurationChain, t: float) -> np.ndarray:
    if len(chain) > 4000:
        raise CapacityError("dense transition matrix would exceed 4000 states")
    P = _uniformized(chain, np.eye(len(chain)), t)
    return P / P.sum(axis=1, keepdims=True)


def grid_path_law(chain: ConfigurationChain, initial: FinitePMF, grid,
                  support_cap: int = DEFAULT_SUPPORT_CAP) -> FinitePMF:
    """Joint law of the configurations at the grid times.

    Coordinates are named ``("x", v, i)`` for vertex ``v`` at grid index ``i``.
    """
    grid = [float(s) for s in grid]
    if not grid or grid[0] < 0 or any(b <= a for a, b in zip(grid, grid[1:])):
        raise InputError("grid must be nonnegative and strictly increasing")
    n = len(chain)
    if n ** len(grid) > support_cap:
        raise CapacityError(f"joint support {n}^{len(grid)} exceeds {support_cap}")
    p0 = _uniformized(chain, chain.vector(initial), grid[0])
    joint = p0 / p0.sum()
    for a, b in zip(grid, grid[1:]):
        P = transition_matrix(chain, b - a)
        joint = joint[..., None] * P.reshape((1,) * (joint.ndim - 1) + P.shape)
    joint = joint / joint.sum()
    idx = np.nonzero(joint > 0)
    states = np.array(chain.states, dtype=np.int64)
    atoms = np.concatenate([states[i] for i in idx], axis=1)
    names = tuple(name for i in range(len(grid)) for name in chain.names(i))
    return FinitePMF(atoms, joint[idx], names)


def mixture_grid_law(g: MarkedGraph, model: Model, marks_sampler, grid,
                     cap: int = DEFAULT_STATE_CAP,
                     support_cap: int = DEFAULT_SUPPORT_CAP) -> FinitePMF:
    """Joint law of (marks, grid configurations) for independently drawn marks.

    Marks occupy coordinates ``("mark", v)``; the initial configuration is
    the initial-condition map applied to the marks.
    """
    supports = [marks_sampler.support(v) for v in g.vertices]
    atoms, probs, names = [], [], None
    for combo in itertools.product(*supports):
        marks = {v: m for v, (m, _) in zip(g.vertices, combo)}
        weight = math.prod(p for _, p in combo)
        x0 = tuple(model.initial_state(marks[v]) for v in g.vertices)
        chain = ConfigurationChain(g, model, [x0], marks, cap)
        law = grid_path_law(chain, FinitePMF.point_mass(x0, chain.names()), grid, support_cap)
        mark_cols = np.broadcast_to(np.array([marks[v] for v in g.vertices], dtype=np.int64),
                                    (len(law), len(g.vertices)))
        atoms.append(np.concatenate([mark_cols, law.atoms], axis=1))
        probs.append(weight * law.probs)
        names = tuple(("mark", v) for v in g.vertices) + law.names
    probs = np.concatenate(probs)
    return FinitePMF(np.concatenate(atoms), probs / math.fsum(probs.tolist()), names)


def vertex_coords(pmf: FinitePMF, vertices, include_marks: bool = True) -> list:
    """Coordinates of ``pmf`` that belong to the given vertices."""
    vertices = set(vertices)
    out = []
    for i, name in enumerate(pmf.names):
        if isinstance(name, tuple) and len(name) >= 2 and name[1] in vertices:
            if name[0] == "x" or (include_marks and name[0] == "mark"):
                out.append(i)
    return out


def _group(atoms: np.ndarray, coords):
    if not coords:
        return np.zeros(len(atoms), dtype=np.int64)
    _, inv = np.unique(atoms[:, coords], axis=0, return_inverse=True)
    return inv.ravel()


def conditional_mutual_information(joint: FinitePMF, blocks) -> float:
    """``I(A; B | S)`` in nats for coordinate index blocks ``(A, B, S)``."""
    a, b, s = (list(x) for x in blocks)
    if set(a) & set(b) or set(a) & set(s) or set(b) & set(s):
        raise InputError("blocks must be disjoint")
    p = joint.probs
    keep = p > 0
    atoms, p = joint.atoms[keep], p[keep]
    g_abs = _group(atoms, a + b + s)
    g_as = _group(atoms, a + s)
    g_bs = _group(atoms, b + s)
    g_s = _group(atoms, s)
    p_abs = np.bincount(g_abs, weights=p)
    p_as = np.bincount(g_as, weights=p)
    p_bs = np.bincount(g_bs, weights=p)
    p_s = np.bincount(g_s, weights=p)
    # one representative atom per (a, b, s) cell
    _, first = np.unique(g_abs, return_index=True)
    pj = p_abs[g_abs[first]]
    terms = pj * (np.log(pj) + np.log(p_s[g_s[first]])
                  - np.log(p_as[g_as[first]]) - np.log(p_bs[g_bs[first]]))
    return max(math.fsum(terms.tolist()), 0.0)


def tilted_cmi(p0: FinitePMF, rho: Callable) -> float:
    """CMI of ``(z1; z2 | z3)`` under ``p0 * rho`` renormalised."""
    if p0.atoms.shape[1] != 3:
        raise InputError("expected a pmf over three coordinates (z1, z2, z3)")
    dens = np.array([float(rho(*atom)) for atom in p0.atoms.tolist()])
    if (dens < 0).any():
        raise InputError("tilt must be nonnegative")
    tilted = p0.probs * dens
    z = math.fsum(tilted.tolist())
    if not z > 0:
        raise InputError("tilted pmf has zero mass")
    return conditional_mutual_information(FinitePMF(p0.atoms, tilted / z, p0.names),
                                          ([0], [1], [2]))


def check_factorization_ci(p0: FinitePMF, rho1: Callable, rho2: Callable):
    """Return ``(ci_before, ci_after)`` for the tilt ``rho1(z1, z3) * rho2(z2, z3)``."""
    ci_before = conditional_mutual_information(p0, ([0], [1], [2]))
    if ci_before >= 1e-10:
        raise PreconditionError(f"base pmf is not conditionally independent (CMI={ci_before})")
    ci_after = tilted_cmi(p0, lambda z1, z2, z3: rho1(z1, z3) * rho2(z2, z3))
    return ci_before, ci_after
