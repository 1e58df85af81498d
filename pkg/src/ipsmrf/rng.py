"""Counter-based random streams.

Every random number used by the simulators is a pure function of a 64-bit
key and a draw counter: ``u = finalize(key + (counter + 1) * GOLDEN)``, the
SplitMix64 output sequence started at ``key``.  Keys are derived from the
master seed by chaining the same finalizer over integer labels
(replicate, domain tag, vertex, layer), so a stream can be addressed
directly without materialising a generator object.  This lets the scalar
event-driven simulator and the vectorised batch simulator read exactly the
same numbers, and makes results independent of how replicates are split
across threads.
"""
from __future__ import annotations

import numpy as np

GOLDEN = np.uint64(0x9E3779B97F4A7C15)
_M1 = np.uint64(0xBF58476D1CE4E5B9)
_M2 = np.uint64(0x94D049BB133111EB)
_TWO53 = 2.0 ** -53

# domain tags keep the candidate streams, mark draws and run seeds apart
STREAM_TAG = 0x5354524D
MARK_TAG = 0x4D41524B
RUN_TAG = 0x52554E53
PERM_TAG = 0x5045524D


def mix64(z):
    """SplitMix64 finaliser applied elementwise to a uint64 array."""
    z = np.asarray(z, dtype=np.uint64)
    with np.errstate(over="ignore"):
        z = (z ^ (z >> np.uint64(30))) * _M1
        z = (z ^ (z >> np.uint64(27))) * _M2
    return z ^ (z >> np.uint64(31))


def derive_keys(key, *parts):
    """Chain integer labels into ``key``; broadcasts over array-valued parts."""
    h = np.asarray(key, dtype=np.uint64)
    with np.errstate(over="ignore"):
        h = mix64(h + GOLDEN)
        for p in parts:
            p = np.asarray(p)
            p = p.astype(np.uint64) if p.dtype != np.uint64 else p
            h = mix64(h ^ mix64(p * GOLDEN + _M1))
    return h


def derive_seed(seed: int, *parts) -> int:
    """Scalar convenience wrapper returning a Python int."""
    return int(derive_keys(np.uint64(seed), *[np.uint64(p) for p in parts]))


def uniforms(keys, counters):
    """Uniform variates on the open interval (0, 1) for each (key, counter)."""
    keys = np.asarray(keys, dtype=np.uint64)
    counters = np.asarray(counters).astype(np.uint64)
    with np.errstate(over="ignore"):
        z = mix64(keys + (counters + np.uint64(1)) * GOLDEN)
    return ((z >> np.uint64(11)).astype(np.float64) + 0.5) * _TWO53


def candidate_draws(keys, index, n_jumps: int, rate: float | np.ndarray):
    """Draws for candidate number ``index`` of each stream in ``keys``.

    Returns ``(waiting_time, jump_index, level_fraction)``: the exponential
    gap (rate ``rate``) before this candidate, the index of its jump mark in
    the jump set, and its thinning level as a fraction of the layer height.
    """
    index = np.asarray(index).astype(np.uint64)
    base = index * np.uint64(3)
    u0 = uniforms(keys, base)
    u1 = uniforms(keys, base + np.uint64(1))
    u2 = uniforms(keys, base + np.uint64(2))
    wait = -np.log(u0) / rate
    jump_index = np.minimum((u1 * n_jumps).astype(np.int64), n_jumps - 1)
    return wait, jump_index, u2
