"""Reproducible experiment runners behind the acceptance suite and the CLI.

Every runner is a pure function of its arguments (seed included) and
returns a JSON-serialisable dict with a boolean ``passed``.  Thread count
only changes how replicates are scheduled, never the numbers.
"""
from __future__ import annotations

import json
import math
import os
import time
from pathlib import Path

import numpy as np
from scipy import stats

from .batch import simulate_batch
from .girsanov import direct_estimate, importance_estimate, martingale_diagnostic
from .graph import MarkedGraph, path_graph
from .marks import IndependentMarks
from .model import counterexample_graph, make_builtin, make_counterexample_model
from .mrftest import ci_test, mrf_suite
from .oracle import (FinitePMF, check_factorization_ci, conditional_mutual_information,
                     mixture_grid_law, tilted_cmi, vertex_coords)
from .rng import RUN_TAG, derive_seed

CONTACT = {"lambda": 1.5, "mu": 1.0}


def counterexample_marks() -> IndependentMarks:
    """Outer marks i.i.d. Bernoulli(1/2), middle vertex starts empty."""
    return IndependentMarks.bernoulli(0.5, fixed={2: 0})


def contact_path(n: int = 5):
    return path_graph(n, start=1), make_builtin("contact", CONTACT)


def oracle_cmi(g, model, marks_sampler, grid, a, b, s) -> float:
    """Exact CMI of (marks, grid states) blocks under the grid law."""
    law = mixture_grid_law(g, model, marks_sampler, grid)
    blocks = [vertex_coords(law, block) for block in (a, b, s)]
    return conditional_mutual_information(law, blocks)


def reproduce_counterexample(n_samples: int = 100_000, seed: int = 7, t: float = 1.0,
                             threads: int = 1, n_permutations: int = 999) -> dict:
    """Conditional law of ``X_1(0)`` given the middle vertex in the 1-MRF counterexample."""
    g = counterexample_graph()
    batch = simulate_batch(g, make_counterexample_model(), t, (), n_samples, seed,
                           counterexample_marks(), threads=threads)
    x1 = batch.initial[:, batch.column(1)]
    x3 = batch.initial[:, batch.column(3)]
    jumped = batch.states_at(t, left=True)[:, batch.column(2)] == 1
    n_cond = int(jumped.sum())
    est = float(x1[jumped].mean()) if n_cond else math.nan
    se = math.sqrt(0.25 / n_cond) if n_cond else math.inf
    by_x3 = {str(k): (float(x1[jumped & (x3 == k)].mean())
                      if (jumped & (x3 == k)).any() else None) for k in (0, 1)}
    violations = int(np.count_nonzero(x1[jumped] != 1 - x3[jumped]))
    report = ci_test(batch, [1], [3], [2], None, t, 0.01, n_permutations,
                     derive_seed(seed, RUN_TAG, 0), alpha=1)
    within = abs(est - 0.5) <= min(4.0 * se, 0.013)
    return {
        "n_samples": n_samples, "seed": seed, "t": t,
        "n_conditioned": n_cond,
        "p_x1_given_x2": est, "binomial_std_error": se,
        "p_x1_given_x2_x3": by_x3,
        "identity_violations": violations,
        "ci_test": report.row(),
        "passed": bool(within and violations == 0 and n_cond > 0),
    }


def mrf_failure_power(n_runs: int = 100, n_samples: int = 100_000, seed: int = 1,
                      t: float = 1.0, threads: int = 1, n_permutations: int = 999) -> dict:
    """Rejection count of the alpha=1 suite on the counterexample, plus the oracle CMI."""
    g, model, marks = counterexample_graph(), make_counterexample_model(), counterexample_marks()
    rejections, p_values = 0, []
    for r in range(n_runs):
        res = mrf_suite(g, model, marks, 1, t, n_samples, derive_seed(seed, RUN_TAG, r),
                        level=0.01, n_permutations=n_permutations, threads=threads)
        rejections += res.reject
        p_values.append(min(rep.p_value for rep in res.reports))
    cmi = oracle_cmi(g, model, marks, [t], [1], [3], [2])
    need = math.ceil(0.99 * n_runs)
    return {"n_runs": n_runs, "n_samples": n_samples, "seed": seed, "t": t,
            "rejections": rejections, "required": need, "min_p_values": p_values,
            "oracle_cmi_grid": [t], "oracle_cmi": cmi,
            "passed": bool(rejections >= need and cmi > 1e-3)}


def mrf_preservation(n_samples: int = 100_000, seed: int = 2, t: float = 1.0,
                     threads: int = 1, n_permutations: int = 999) -> dict:
    """Alpha=2 check on the contact 5-path: oracle grid CMI and the empirical suite."""
    g, model = contact_path()
    marks = IndependentMarks.bernoulli(0.5)
    grid = [0.0, t / 2, t]
    cmi = oracle_cmi(g, model, marks, grid, [1], [4, 5], [2, 3])
    res = mrf_suite(g, model, marks, 2, t, n_samples, seed, level=0.01,
                    n_permutations=n_permutations, threads=threads)
    oracle_ok = cmi < 1e-10
    return {"n_samples": n_samples, "seed": seed, "t": t,
            "oracle_grid": grid, "oracle_cmi": cmi, "oracle_passed": bool(oracle_ok),
            "suite": [r.row() for r in res.reports],
            "suite_adjusted_level": res.adjusted_level,
            "suite_passed": not res.reject,
            "passed": bool(oracle_ok and not res.reject)}


def girsanov_mean_one(n_samples: int = 100_000, seed: int = 3, times=(0.5, 1.0, 2.0),
                      threads: int = 1) -> dict:
    g, model = contact_path()
    rows = martingale_diagnostic(model, g, [3], list(times), n_samples, seed,
                                 IndependentMarks.bernoulli(0.5), threads=threads)
    return {"n_samples": n_samples, "seed": seed, "w": [3], "diagnostic": rows,
            "passed": not any(r["flag"] for r in rows)}


def importance_equivalence(n_samples: int = 100_000, seed: int = 4, t: float = 1.0,
                           threads: int = 1) -> dict:
    """``E_ref[L f]`` against direct simulation and the exact marginal."""
    g, model = contact_path()
    marks = IndependentMarks.bernoulli(0.5)

    def f(batch):
        return batch.states_at(t, left=True)[:, batch.column(3)] == 1

    imp, imp_se = importance_estimate(model, g, [3], t, f, n_samples,
                                      derive_seed(seed, RUN_TAG, 0), marks, threads)
    dir_, dir_se = direct_estimate(model, g, t, f, n_samples,
                                   derive_seed(seed, RUN_TAG, 1), marks, threads)
    law = mixture_grid_law(g, model, marks, [t])
    col = law.names.index(("x", 3, 0))
    exact = math.fsum(law.probs[law.atoms[:, col] == 1].tolist())
    ok_direct = abs(imp - dir_) <= 4.0 * math.hypot(imp_se, dir_se)
    ok_exact = abs(imp - exact) <= 4.0 * imp_se
    return {"n_samples": n_samples, "seed": seed, "t": t, "w": [3],
            "importance": imp, "importance_std_error": imp_se,
            "direct": dir_, "direct_std_error": dir_se, "exact": exact,
            "matches_direct": bool(ok_direct), "matches_exact": bool(ok_exact),
            "passed": bool(ok_direct and ok_exact)}


def thinning_exactness(n_samples: int = 100_000, seed: int = 5, t: float = 0.7,
                       a: float = 2.0, b: float = 3.0, threads: int = 1) -> dict:
    """Two-state marginal against its closed form, frozen counts against Poisson."""
    g = MarkedGraph.from_edges([0], [], marks={0: 0})
    model = make_builtin("constant_birth_death", {"a": a, "b": b})
    fixed = IndependentMarks.constant({0: 0})
    batch = simulate_batch(g, model, t, (), n_samples, derive_seed(seed, RUN_TAG, 0), fixed,
                           threads=threads)
    ones = batch.states_at(t, left=False)[:, 0] == 1
    estimate = float(ones.mean())
    exact = a / (a + b) * (1.0 - math.exp(-(a + b) * t))
    se = math.sqrt(estimate * (1.0 - estimate) / n_samples)
    ok = abs(estimate - exact) <= 4.0 * se

    frozen = simulate_batch(g, model, t, [0], n_samples, derive_seed(seed, RUN_TAG, 1), fixed,
                            threads=threads)
    counts = frozen.event_counts([0], 0.0, t)
    mu = len(model.jump_set) * t
    chi2, p_value, bins = _poisson_gof(counts, mu)
    return {"n_samples": n_samples, "seed": seed, "t": t, "a": a, "b": b,
            "p_one": estimate, "p_one_exact": exact, "std_error": se,
            "marginal_passed": bool(ok),
            "frozen_poisson_mean": mu, "frozen_bins": bins, "chi2": chi2,
            "chi2_p_value": p_value,
            "passed": bool(ok and p_value > 0.01)}


def _poisson_gof(counts, mu, min_expected: float = 5.0):
    """Chi-squared goodness of fit with the upper tail pooled into the last bin."""
    n = len(counts)
    k_max = 0
    while n * stats.poisson.sf(k_max, mu) >= min_expected:
        k_max += 1
    expected = np.array([stats.poisson.pmf(k, mu) for k in range(k_max)]
                        + [stats.poisson.sf(k_max - 1, mu)]) * n
    observed = np.array([np.count_nonzero(counts == k) for k in range(k_max)]
                        + [np.count_nonzero(counts >= k_max)], dtype=float)
    res = stats.chisquare(observed, expected)
    return float(res.statistic), float(res.pvalue), k_max + 1


def random_ci_pmf(rng: np.random.Generator, k: int = 3) -> FinitePMF:
    """``p(z3) p(z1|z3) p(z2|z3)`` with Dirichlet factors, over ``{0..k-1}^3``."""
    p3 = rng.dirichlet(np.ones(k))
    p1 = rng.dirichlet(np.ones(k), size=k)
    p2 = rng.dirichlet(np.ones(k), size=k)
    joint = np.einsum("c,ca,cb->abc", p3, p1, p2)
    return FinitePMF.from_array(joint / joint.sum(), names=("z1", "z2", "z3"))


def factorization_check(n_cases: int = 100, seed: int = 6) -> dict:
    """Factorised tilts keep conditional independence; generic tilts break it."""
    after, control = [], []
    for i in range(n_cases):
        rng = np.random.default_rng(derive_seed(seed, RUN_TAG, i))
        p0 = random_ci_pmf(rng)
        r1 = np.exp(rng.normal(size=(3, 3)))
        r2 = np.exp(rng.normal(size=(3, 3)))
        full = np.exp(rng.normal(size=(3, 3, 3)))
        _, ci_after = check_factorization_ci(p0, lambda z1, z3: r1[z1, z3],
                                             lambda z2, z3: r2[z2, z3])
        after.append(ci_after)
        control.append(tilted_cmi(p0, lambda z1, z2, z3: full[z1, z2, z3]))
    n_ok = sum(c < 1e-10 for c in after)
    n_control = sum(c > 1e-4 for c in control)
    return {"n_cases": n_cases, "seed": seed, "max_ci_after": max(after),
            "factorized_ok": n_ok, "control_detected": n_control,
            "min_control_cmi": min(control),
            "passed": bool(n_ok == n_cases and n_control >= 95 * n_cases / 100)}


CRITERIA = {
    "criterion_1": reproduce_counterexample,
    "criterion_2": mrf_failure_power,
    "criterion_3": mrf_preservation,
    "criterion_4": girsanov_mean_one,
    "criterion_5": importance_equivalence,
    "criterion_6": thinning_exactness,
    "criterion_7": factorization_check,
}


def dump_json(obj, path) -> None:
    """Deterministic UTF-8 JSON: sorted keys, fixed layout, trailing newline."""
    text = json.dumps(obj, sort_keys=True, indent=2, ensure_ascii=False, allow_nan=True)
    Path(path).write_text(text + "\n", encoding="utf-8")


def run_criteria(out_dir, names=None, threads: int = 1, overrides=None) -> dict:
    """Run the named criteria, write ``<name>.json`` each, and return the results.

    Wall-clock times go to ``timings.json``, which is outside the
    determinism contract.
    """
    out = Path(out_dir)
    os.makedirs(out, exist_ok=True)
    names = list(CRITERIA) if names is None else list(names)
    overrides = overrides or {}
    results, timings = {}, {}
    for name in names:
        fn = CRITERIA[name]
        kwargs = dict(overrides.get(name, {}))
        if "threads" in fn.__code__.co_varnames[:fn.__code__.co_argcount]:
            kwargs["threads"] = threads
        start = time.perf_counter()
        results[name] = fn(**kwargs)
        timings[name] = time.perf_counter() - start
        dump_json(results[name], out / f"{name}.json")
    dump_json(timings, out / "timings.json")
    return results
