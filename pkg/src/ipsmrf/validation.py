"""Input validation helpers, in the spirit of ``sklearn.utils.validation``."""
from __future__ import annotations

import numbers
from typing import Iterable

from .exceptions import InputError

SEED_MAX = 2**64 - 1


def check_seed(seed) -> int:
    """Return ``seed`` as a Python int in ``[0, 2**64)``."""
    if isinstance(seed, bool) or not isinstance(seed, numbers.Integral):
        raise InputError(f"seed must be an integer, got {seed!r}")
    seed = int(seed)
    if not 0 <= seed <= SEED_MAX:
        raise InputError(f"seed must be a 64-bit unsigned integer, got {seed}")
    return seed


def check_positive_int(value, name: str, minimum: int = 1) -> int:
    if isinstance(value, bool) or not isinstance(value, numbers.Integral):
        raise InputError(f"{name} must be an integer, got {value!r}")
    if value < minimum:
        raise InputError(f"{name} must be >= {minimum}, got {value}")
    return int(value)


def check_horizon(horizon, name: str = "horizon") -> float:
    try:
        horizon = float(horizon)
    except (TypeError, ValueError):
        raise InputError(f"{name} must be a number, got {horizon!r}") from None
    if not horizon > 0 or horizon == float("inf"):
        raise InputError(f"{name} must be a finite positive time, got {horizon}")
    return horizon


def check_vertex_set(vertices: Iterable, known, name: str = "vertex set") -> tuple:
    """Return ``vertices`` as a sorted tuple after checking membership in ``known``."""
    if vertices is None:
        return ()
    out = []
    seen = set()
    for v in vertices:
        if isinstance(v, bool) or not isinstance(v, numbers.Integral):
            raise InputError(f"{name}: vertex ids are integers, got {v!r}")
        v = int(v)
        if v not in known:
            raise InputError(f"{name}: unknown vertex {v}")
        if v in seen:
            raise InputError(f"{name}: duplicate vertex {v}")
        seen.add(v)
        out.append(v)
    return tuple(sorted(out))


def check_disjoint(**sets) -> None:
    """Raise InputError unless the named vertex sets are pairwise disjoint."""
    names = list(sets)
    for i, a in enumerate(names):
        for b in names[i + 1:]:
            common = set(sets[a]) & set(sets[b])
            if common:
                raise InputError(
                    f"sets {a} and {b} must be disjoint; both contain {sorted(common)}")
