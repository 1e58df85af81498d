"""Empirical checks of conditional independence between trajectory blocks.

Trajectories are reduced to discrete per-vertex codes by a summary scheme
(a deterministic function of one vertex's path on ``[0, t)`` plus its mark),
and ``(A-codes) _||_ (B-codes) | (S-codes)`` is tested with a plug-in
conditional mutual information statistic against a stratified permutation
null.  Testing summaries is only a necessary condition for independence of
whole paths.

The permutation null is sampled exactly without shuffling samples: shuffling
the A-codes within a stratum yields a uniformly random contingency table
with the observed margins, which is drawn cell by cell from hypergeometric
laws for all strata and permutations at once.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np
from scipy.special import xlogy
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_is_fitted

from .batch import TrajectoryBatch, simulate_batch
from .exceptions import InputError, InsufficientDataError
from .graph import MarkedGraph, neighborhood
from .model import Model
from .rng import PERM_TAG, derive_seed
from .sim import Trajectory
from .validation import check_disjoint, check_positive_int, check_seed, check_vertex_set

MIN_STRATUM = 5
MIN_SAMPLES = 10


@dataclass(frozen=True)
class GridStates:
    """States at fixed times; a grid point equal to ``t`` reads ``x(t-)``."""

    grid: tuple

    def validate(self, t):
        if any(g < 0 or g > t for g in self.grid):
            raise InputError(f"grid {self.grid} must lie in [0, {t}]")


@dataclass(frozen=True)
class JumpSignature:
    """Binned time and size of the first ``max_jumps`` jumps before ``t``.

    ``time_bins`` are bin edges ``e0 < e1 < ...``; bin ``k >= 1`` is
    ``(e_{k-1}, e_k]``.  Missing jumps are padded with ``(0, 0)``.
    """

    max_jumps: int
    time_bins: tuple

    def validate(self, t):
        edges = self.time_bins
        if len(edges) < 2 or any(b <= a for a, b in zip(edges, edges[1:])):
            raise InputError("time_bins must be at least two increasing edges")
        if edges[0] > 0 or edges[-1] < t:
            raise InputError(f"time_bins must cover (0, {t}]")


def default_scheme(t: float) -> GridStates:
    return GridStates((0.0, t / 3.0, 2.0 * t / 3.0))


def summarize(x: Trajectory, v: int, scheme, t: float) -> tuple:
    """Discrete code of vertex ``v``'s path on ``[0, t)``."""
    if t > x.horizon:
        raise InputError(f"t={t} exceeds the horizon {x.horizon}")
    scheme.validate(t)
    if isinstance(scheme, GridStates):
        return tuple(x.state_at(v, g, left=(g == t)) for g in scheme.grid)
    edges = np.asarray(scheme.time_bins)
    code = []
    for e in x.events_of([v]):
        if e.t >= t or len(code) == 2 * scheme.max_jumps:
            break
        code += [int(np.searchsorted(edges, e.t, side="left")), e.j]
    return tuple(code + [0] * (2 * scheme.max_jumps - len(code)))


def summarize_batch(batch: TrajectoryBatch, v: int, scheme, t: float) -> np.ndarray:
    """Vectorised :func:`summarize` for every replicate; shape ``(R, L)``."""
    if t > batch.horizon:
        raise InputError(f"t={t} exceeds the horizon {batch.horizon}")
    scheme.validate(t)
    c = batch.column(v)
    if isinstance(scheme, GridStates):
        return np.stack([batch.states_at(g, left=(g == t))[:, c] for g in scheme.grid], axis=1)
    R, k = len(batch), scheme.max_jumps
    out = np.zeros((R, 2 * k), dtype=np.int64)
    sel = np.nonzero((batch.cols == c) & (batch.times < t))[0]
    rows = batch.rows[sel]
    # rank of each selected event among its row's selected events
    first = np.searchsorted(rows, rows, side="left")
    rank = np.arange(len(sel)) - first
    keep = rank < k
    sel, rows, rank = sel[keep], rows[keep], rank[keep]
    out[rows, 2 * rank] = np.searchsorted(np.asarray(scheme.time_bins), batch.times[sel],
                                          side="left")
    out[rows, 2 * rank + 1] = batch.jumps[sel]
    return out


def as_batch(ensemble) -> TrajectoryBatch:
    if isinstance(ensemble, TrajectoryBatch):
        return ensemble
    trajs = []
    for item in ensemble:
        if isinstance(item, Trajectory):
            trajs.append(item)
        else:
            marks, x = item
            trajs.append(Trajectory(x.horizon, x.initial, x.events, dict(marks), x.edges,
                                    x.seed, x.replicate, x.frozen))
    return TrajectoryBatch.from_trajectories(trajs)


class TrajectorySummarizer(TransformerMixin, BaseEstimator):
    """Encode each vertex's (mark, path summary) as a small integer code.

    ``fit`` learns the observed codes per vertex; ``transform`` returns an
    ``(R, n_vertices)`` integer array, with ``-1`` for codes unseen in fit.
    """

    def __init__(self, scheme=None, t: float = 1.0, include_marks: bool = True):
        self.scheme = scheme
        self.t = t
        self.include_marks = include_marks

    def _raw(self, batch):
        scheme = self.scheme if self.scheme is not None else default_scheme(self.t)
        cols = []
        for c, v in enumerate(batch.vertices):
            parts = [summarize_batch(batch, v, scheme, self.t)]
            if self.include_marks:
                parts.insert(0, batch.marks[:, [c]].astype(np.int64))
            cols.append(np.concatenate(parts, axis=1))
        return cols

    def fit(self, X, y=None):
        batch = as_batch(X)
        self.vertices_ = batch.vertices
        self.categories_ = [np.unique(raw, axis=0) for raw in self._raw(batch)]
        return self

    def transform(self, X):
        check_is_fitted(self, "categories_")
        batch = as_batch(X)
        if batch.vertices != self.vertices_:
            raise InputError("ensemble vertices differ from the fitted ones")
        out = np.empty((len(batch), len(self.vertices_)), dtype=np.int64)
        for c, (raw, cats) in enumerate(zip(self._raw(batch), self.categories_)):
            lookup = {tuple(row): i for i, row in enumerate(cats.tolist())}
            out[:, c] = [lookup.get(tuple(row), -1) for row in raw.tolist()]
        return out


def block_codes(codes: np.ndarray, cols) -> np.ndarray:
    """Joint code of several per-vertex code columns."""
    cols = list(cols)
    if not cols:
        return np.zeros(len(codes), dtype=np.int64)
    return _joint(*(codes[:, c] for c in cols))


def plugin_cmi(a, b, s) -> float:
    """Plug-in ``I(A; B | S)`` in nats from integer code arrays."""
    a, b, s = (np.asarray(x) for x in (a, b, s))
    val = _sum_xlogx(s, a, b) + _sum_xlogx(s) - _sum_xlogx(s, a) - _sum_xlogx(s, b)
    return max(val / len(a), 0.0)


class PermutationCITest(BaseEstimator):
    """Stratified permutation test of ``A _||_ B | S`` on discrete codes.

    After :meth:`fit`, ``cmi_`` is the plug-in statistic, ``p_value_`` the
    permutation p-value ``(1 + #{null >= observed}) / (1 + n_permutations)``
    and ``reject_`` the decision at ``level``.  Strata with fewer than five
    samples are pooled into one remainder stratum.
    """

    def __init__(self, n_permutations: int = 999, level: float = 0.01, random_state: int = 0):
        self.n_permutations = n_permutations
        self.level = level
        self.random_state = random_state

    def fit(self, a, b, s=None):
        a = np.asarray(a)
        b = np.asarray(b)
        s = np.zeros(len(a), dtype=np.int64) if s is None else np.asarray(s)
        n = len(a)
        if not len(b) == len(s) == n:
            raise InputError("code arrays differ in length")
        if n < MIN_SAMPLES:
            raise InsufficientDataError(f"need at least {MIN_SAMPLES} samples, got {n}")
        n_perm = check_positive_int(self.n_permutations, "n_permutations")
        a, b, s = _factorize(a), _factorize(b), _factorize(s)
        sizes = np.bincount(s)
        small = sizes < MIN_STRATUM
        if small.any():
            remap = np.cumsum(~small) - 1
            remap[small] = (~small).sum()
            s = remap[s]
        ks = int(s.max()) + 1
        observed = _sum_xlogx(s, a, b)
        margins = _sum_xlogx(s) - _sum_xlogx(s, a) - _sum_xlogx(s, b)
        self.cmi_ = max((observed + margins) / n, 0.0)

        rng = np.random.default_rng(derive_seed(check_seed(self.random_state), PERM_TAG))
        order = np.argsort(s, kind="stable")
        bounds = np.searchsorted(s[order], np.arange(ks + 1))
        null = np.zeros(n_perm)
        for k in range(ks):
            idx = order[bounds[k]:bounds[k + 1]]
            null += _null_stratum(a[idx], b[idx], n_perm, rng)
        tol = 1e-9 * max(1.0, abs(observed))
        self.null_ = (null + margins) / n
        self.p_value_ = float((1 + np.count_nonzero(null >= observed - tol)) / (1 + n_perm))
        self.reject_ = bool(self.p_value_ < self.level)
        self.n_samples_ = n
        self.n_strata_ = int(ks)
        return self


def _factorize(x) -> np.ndarray:
    return np.unique(np.asarray(x), return_inverse=True)[1].ravel().astype(np.int64)


def _joint(*codes) -> np.ndarray:
    """Dense integer code of the tuple of factorized code arrays."""
    out = _factorize(codes[0])
    for c in codes[1:]:
        c = _factorize(c)
        out = _factorize(out * (int(c.max()) + 1) + c)
    return out


def _sum_xlogx(*codes) -> float:
    """``sum c log c`` over the counts of the joint code."""
    counts = np.bincount(_joint(*codes))
    return float(xlogy(counts, counts).sum())


# per-permutation cost of one shuffle element relative to one hypergeometric draw
SHUFFLE_COST = 0.25
MAX_BINCOUNT = 1 << 23


def _null_stratum(a, b, n_perm, rng):
    """``sum x log x`` of the ``(a, b)`` table after shuffling ``a``, per permutation.

    Drawn by shuffling when the stratum is small relative to its table and
    otherwise by sequential hypergeometric sampling of the cells; both give
    the exact permutation law of the table.
    """
    a = _factorize(a)
    b = _factorize(b)
    ka, kb = int(a.max()) + 1, int(b.max()) + 1
    if ka < 2 or kb < 2:
        counts = np.bincount(a * kb + b)
        return np.full(n_perm, float(xlogy(counts, counts).sum()))
    if SHUFFLE_COST * len(a) < (ka - 1) * (kb - 1):
        return _null_by_shuffle(a, b, ka, kb, n_perm, rng)
    table = np.zeros((ka, kb), dtype=np.int64)
    np.add.at(table, (a, b), 1)
    rows = table.sum(axis=1)
    remaining = np.tile(table.sum(axis=0), (n_perm, 1))
    stat = np.zeros(n_perm)
    for r in rows[:-1]:
        need = np.full(n_perm, r)
        pool = remaining.sum(axis=1)
        for j in range(kb - 1):
            good = remaining[:, j]
            pool = pool - good
            x = rng.hypergeometric(good, pool, need)
            stat += xlogy(x, x)
            remaining[:, j] -= x
            need = need - x
        stat += xlogy(need, need)
        remaining[:, -1] -= need
    return stat + xlogy(remaining, remaining).sum(axis=1)


def _null_by_shuffle(a, b, ka, kb, n_perm, rng):
    n_cells = ka * kb
    stat = np.empty(n_perm)
    chunk = max(1, min(n_perm, MAX_BINCOUNT // max(n_cells, len(a))))
    for lo in range(0, n_perm, chunk):
        m = min(chunk, n_perm - lo)
        shuffled = rng.permuted(np.broadcast_to(a, (m, len(a))), axis=1)
        cells = shuffled * kb + b
        cells += np.arange(m)[:, None] * n_cells
        counts = np.bincount(cells.ravel(), minlength=m * n_cells).reshape(m, n_cells)
        stat[lo:lo + m] = xlogy(counts, counts).sum(axis=1)
    return stat


@dataclass(frozen=True)
class CITestReport:
    a: tuple
    b: tuple
    s: tuple
    alpha: int | None
    cmi: float
    p_value: float
    n_samples: int
    n_permutations: int
    level: float
    reject: bool
    n_strata: int
    estimator: str = "plug-in conditional mutual information"

    FIELDS = ("a", "b", "s", "alpha", "cmi", "p_value", "n_samples", "n_permutations",
              "level", "reject", "n_strata")

    def row(self) -> dict:
        fmt = lambda xs: " ".join(str(x) for x in xs)  # noqa: E731
        return {"a": fmt(self.a), "b": fmt(self.b), "s": fmt(self.s), "alpha": self.alpha,
                "cmi": f"{self.cmi:.10g}", "p_value": f"{self.p_value:.6g}",
                "n_samples": self.n_samples, "n_permutations": self.n_permutations,
                "level": f"{self.level:.6g}", "reject": int(self.reject),
                "n_strata": self.n_strata}


def ci_test(ensemble, a, b, s, scheme=None, t: float = 1.0, level: float = 0.01,
            n_permutations: int = 999, seed: int = 0, alpha: int | None = None,
            codes: np.ndarray | None = None) -> CITestReport:
    """Test ``(marks_A, X_A[t)) _||_ (marks_B, X_B[t)) | (marks_S, X_S[t))`` on summaries."""
    batch = as_batch(ensemble)
    known = set(batch.vertices)
    a, b, s = (check_vertex_set(x, known, n) for x, n in ((a, "a"), (b, "b"), (s, "s")))
    check_disjoint(a=a, b=b, s=s)
    if codes is None:
        codes = TrajectorySummarizer(scheme, t).fit_transform(batch)
    col = {v: i for i, v in enumerate(batch.vertices)}
    test = PermutationCITest(n_permutations, level, seed).fit(
        block_codes(codes, [col[v] for v in a]), block_codes(codes, [col[v] for v in b]),
        block_codes(codes, [col[v] for v in s]))
    return CITestReport(a, b, s, alpha, test.cmi_, test.p_value_, test.n_samples_,
                        int(n_permutations), float(level), test.reject_, test.n_strata_)


def suite_partitions(g: MarkedGraph, alpha: int) -> list:
    """``(A, S, B)`` for connected ``A`` with ``|A| <= 2``, ``S = N^alpha(A)``, ``B`` nonempty."""
    candidates = [(v,) for v in g.vertices] + sorted(g.edges)
    out, seen = [], set()
    for a in candidates:
        s = neighborhood(g, a, alpha)
        b = tuple(sorted(set(g.vertices) - set(a) - s))
        if not b:
            continue
        key = (tuple(a), tuple(sorted(s)), b)
        if key not in seen:
            seen.add(key)
            out.append(key)
    return out


@dataclass
class MRFSuiteResult:
    reports: list = field(default_factory=list)
    level: float = 0.01
    alpha: int = 2
    n_hypotheses: int = 0

    @property
    def adjusted_level(self) -> float:
        return self.level / max(self.n_hypotheses, 1)

    @property
    def reject(self) -> bool:
        return any(r.reject for r in self.reports)

    def __iter__(self):
        return iter(self.reports)

    def __len__(self):
        return len(self.reports)


def mrf_suite(g: MarkedGraph, model: Model, marks_sampler, alpha: int, t: float,
              n_samples: int, seed: int, scheme=None, level: float = 0.01,
              n_permutations: int = 999, threads: int = 1, ensemble=None) -> MRFSuiteResult:
    """One report per suite partition; distinct hypotheses share a Bonferroni level."""
    alpha = check_positive_int(alpha, "alpha")
    parts = suite_partitions(g, alpha)
    result = MRFSuiteResult([], float(level), alpha)
    if not parts:
        return result
    if ensemble is None:
        ensemble = simulate_batch(g, model, t, (), n_samples, seed, marks_sampler,
                                  threads=threads)
    batch = as_batch(ensemble)
    codes = TrajectorySummarizer(scheme, t).fit_transform(batch)
    # A _||_ B | S and B _||_ A | S are one hypothesis: test it once, report it per A
    keys = [(min(a, b), max(a, b), s) for a, s, b in parts]
    distinct = list(dict.fromkeys(keys))
    adjusted = level / len(distinct)
    done = {}
    for a, s, b in parts:
        key = (min(a, b), max(a, b), s)
        if key not in done:
            k = distinct.index(key)
            done[key] = ci_test(batch, key[0], key[1], s, scheme, t, adjusted, n_permutations,
                                derive_seed(seed, PERM_TAG, k), alpha, codes)
        rep = done[key]
        result.reports.append(replace(rep, a=a, b=b))
    result.n_hypotheses = len(distinct)
    return result


def rejection_rate(results) -> float:
    results = list(results)
    return sum(1 for r in results if r.reject) / len(results) if results else math.nan
