"""Independent-product samplers for the initial marks of an ensemble."""
from __future__ import annotations

from typing import Mapping

import numpy as np

from .exceptions import InputError
from .rng import MARK_TAG, derive_keys, uniforms


class IndependentMarks:
    """Each vertex draws its mark independently from a finite distribution.

    ``per_vertex`` maps a vertex id to ``{value: probability}``; vertices not
    listed use ``default``.  A one-point distribution pins a mark.
    """

    def __init__(self, default: Mapping | None = None, per_vertex: Mapping | None = None):
        self.default = self._check(default) if default is not None else None
        self.per_vertex = {int(v): self._check(d) for v, d in (per_vertex or {}).items()}

    @staticmethod
    def _check(dist):
        values = list(dist)
        probs = np.array([float(dist[v]) for v in values])
        if len(values) == 0 or (probs < 0).any() or abs(probs.sum() - 1.0) > 1e-12:
            raise InputError(f"mark distribution {dict(dist)!r} is not a probability vector")
        return tuple(values), probs

    @classmethod
    def bernoulli(cls, p: float = 0.5, fixed: Mapping | None = None):
        return cls({1: p, 0: 1.0 - p}, {v: {m: 1.0} for v, m in (fixed or {}).items()})

    @classmethod
    def constant(cls, marks: Mapping):
        return cls(None, {v: {m: 1.0} for v, m in marks.items()})

    def _dist(self, v):
        if v in self.per_vertex:
            return self.per_vertex[v]
        if self.default is None:
            raise InputError(f"no mark distribution for vertex {v}")
        return self.default

    def support(self, v):
        """Atoms with positive probability, as ``[(value, prob), ...]``."""
        values, probs = self._dist(v)
        return [(x, p) for x, p in zip(values, probs) if p > 0]

    def sample(self, vertices, seed: int, replicates) -> np.ndarray:
        """Marks for each replicate id, shape ``(len(replicates), len(vertices))``.

        Draws are addressed by (seed, replicate, vertex), so any subset of
        replicates is reproduced exactly.
        """
        reps = np.asarray(replicates, dtype=np.uint64)
        out = np.empty((len(reps), len(vertices)), dtype=object)
        for col, v in enumerate(vertices):
            values, probs = self._dist(v)
            if len(values) == 1:
                out[:, col] = values[0]
                continue
            keys = derive_keys(np.uint64(seed), reps, MARK_TAG, np.uint64(v))
            u = uniforms(keys, np.zeros(len(reps), dtype=np.uint64))
            idx = np.searchsorted(np.cumsum(probs), u, side="right")
            idx = np.minimum(idx, len(values) - 1)
            out[:, col] = np.asarray(values, dtype=object)[idx]
        if all(isinstance(x, (int, np.integer)) and not isinstance(x, bool)
               for x in out.ravel()[:1000]):
            return out.astype(np.int64)
        return out

    def sample_one(self, vertices, seed: int, replicate: int) -> dict:
        row = self.sample(vertices, seed, [replicate])[0]
        return {v: (int(x) if isinstance(x, (np.integer,)) else x) for v, x in zip(vertices, row)}

    def to_config(self) -> dict:
        def enc(d):
            return {str(k): float(p) for k, p in zip(*d)}
        return {"default": enc(self.default) if self.default else None,
                "per_vertex": {str(v): enc(d) for v, d in self.per_vertex.items()}}

    @classmethod
    def from_config(cls, config: Mapping) -> "IndependentMarks":
        """Inverse of :meth:`to_config`; integer-looking mark values become ints."""
        if not isinstance(config, Mapping):
            raise InputError("marks config must be a JSON object")
        unknown = set(config) - {"default", "per_vertex"}
        if unknown:
            raise InputError(f"marks config: unknown field(s) {sorted(unknown)}")

        def dec(d, where):
            if not isinstance(d, Mapping):
                raise InputError(f"marks config: '{where}' must map values to probabilities")
            return {_mark_value(k): p for k, p in d.items()}

        per_vertex = config.get("per_vertex") or {}
        if not isinstance(per_vertex, Mapping):
            raise InputError("marks config: 'per_vertex' must be an object")
        try:
            pv = {int(v): dec(d, f"per_vertex.{v}") for v, d in per_vertex.items()}
        except ValueError:
            raise InputError("marks config: 'per_vertex' keys must be vertex ids") from None
        default = config.get("default")
        return cls(None if default is None else dec(default, "default"), pv)


def _mark_value(key):
    try:
        return int(key)
    except (TypeError, ValueError):
        return key
