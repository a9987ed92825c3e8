"""End-to-end acceptance checks on the worked example and randomized oracles.

Each test records one PASS/FAIL line (with its timing) that is printed in
the pytest terminal summary.  Run with ``pytest tests/test_acceptance.py``.
"""

import contextlib
import itertools
import os
import time

import numpy as np
import pytest

from adjseq import (
    EventTable,
    MVNSettings,
    ObservedStatistics,
    WeightingStrategy,
    bonferroni_shortcut,
    closed_test_report,
    enumerate_closure,
)
from adjseq.correlation import build_ccs
from adjseq.gaussian import union_crossing_probability
from adjseq.graph import closure_weights, removal_weights, validate_strategy
from adjseq.inference import SequentialEngine
from adjseq.simulation import SimulationPlan, simulate
from conftest import EX_COUNTS, EX_OVERLAPS, EX_TRANSITION, EX_WEIGHTS, example_design
from oracles import grid_sequential_p, mc_union, random_correlation, random_design, random_strategy

ALPHA = 0.025
SUBSETS = [(0, 1, 2), (0, 1), (0, 2), (1, 2), (0,), (1,), (2,)]
INTERIM_P = [0.015, 0.010, 0.010]
FINAL_P = [0.015, 0.012, 0.010]
INTERIM_BONF = [0.2097, 0.1678, 0.1468, 0.1468, 0.1258, 0.0839, 0.0839]
FINAL_BONF = [0.0266, 0.0255, 0.0186, 0.0186, 0.0159, 0.0127, 0.0106]
FINAL_WPGSD = [0.0206, 0.0210, 0.0165, 0.0162, 0.0159, 0.0127, 0.0106]

RESULTS: dict[int, str] = {}


@contextlib.contextmanager
def criterion(number, title):
    start = time.perf_counter()
    try:
        yield
    except BaseException as exc:
        RESULTS[number] = f"criterion {number} FAIL  {title} ({time.perf_counter() - start:.2f} s): {exc}"
        raise
    RESULTS[number] = f"criterion {number} PASS  {title} ({time.perf_counter() - start:.2f} s)"


def timed(fn, *args, **kwargs):
    start = time.perf_counter()
    out = fn(*args, **kwargs)
    return out, time.perf_counter() - start


def example_data():
    z = np.column_stack([INTERIM_P, FINAL_P])
    return ObservedStatistics.from_p(z)


def test_criterion_1_subset_weights():
    with criterion(1, "subset weights of the worked example"):
        strategy, elapsed = timed(
            lambda: closure_weights(validate_strategy(WeightingStrategy(EX_WEIGHTS, EX_TRANSITION)))
        )
        assert elapsed < 0.1, f"took {elapsed:.3f} s"
        assert np.array_equal(strategy[(0, 1, 2)], [0.3, 0.3, 0.4])
        assert np.array_equal(strategy[(0, 1)], [0.5, 0.5])
        for j in range(3):
            assert strategy[(j,)].tolist() == [1.0]
        # Equal weights (0.5, 0.5) are sometimes quoted for these pairs, but
        # the transition matrix gives 3/7 and 4/7: removing H2 from
        # {H1,H2,H3} leaves H1 with 0.3 + 0.3 * 3/7 and H3 with
        # 0.4 + 0.3 * 4/7.  The graph-derived values are asserted.
        for pair in ((0, 2), (1, 2)):
            assert strategy[pair] == pytest.approx([3 / 7, 4 / 7], abs=1e-15)
            assert np.round(strategy[pair], 6).tolist() == [0.428571, 0.571429]


def test_criterion_2_correlation():
    with criterion(2, "correlation from event counts"):
        table = EventTable.from_pairwise(EX_COUNTS, EX_OVERLAPS)
        c, elapsed = timed(build_ccs, table)
        assert elapsed < 0.1, f"took {elapsed:.3f} s"
        n = np.array(EX_COUNTS, dtype=float)
        total = {(j, k): n[j, k] for j in range(3) for k in range(2)}
        shared = {}
        for (i, j), v in EX_OVERLAPS.items():
            for a, b in itertools.product(range(2), repeat=2):
                shared[(i, a), (j, b)] = shared[(j, b), (i, a)] = v[min(a, b)]
        for j in range(3):
            for a, b in itertools.product(range(2), repeat=2):
                shared[(j, a), (j, b)] = n[j, min(a, b)]
        rounded = {
            (0, 1): 0.76, (0, 2): 0.67, (0, 3): 0.71, (0, 4): 0.54, (0, 5): 0.47,
            (1, 2): 0.70, (1, 3): 0.54, (1, 4): 0.71, (1, 5): 0.49,
            (2, 3): 0.47, (2, 4): 0.49, (2, 5): 0.71,
            (3, 4): 0.76, (3, 5): 0.67, (4, 5): 0.70,
        }
        for (r, s), two_dp in rounded.items():
            (ka, ja), (kb, jb) = divmod(r, 3), divmod(s, 3)
            exact = shared[(ja, ka), (jb, kb)] / np.sqrt(total[ja, ka] * total[jb, kb])
            assert abs(c[r, s] - exact) <= 1e-12
            assert round(c[r, s], 2) == two_dp
        scaled = EventTable.from_pairwise(
            (n * 0.8).tolist(), {k: (np.array(v) * 0.8).tolist() for k, v in EX_OVERLAPS.items()}
        )
        assert np.array_equal(build_ccs(scaled), c)


def test_criterion_3_interim_bonferroni():
    with criterion(3, "interim weighted Bonferroni closed test"):
        design = example_design()
        rep, elapsed = timed(closed_test_report, 1, ALPHA, example_data(), design, "bonferroni")
        assert elapsed < 1.0, f"took {elapsed:.3f} s"
        for sub, want in zip(SUBSETS, INTERIM_BONF):
            assert abs(rep.subset_p[sub] - want) <= 5e-4, (sub, rep.subset_p[sub])
        assert all(abs(rep.adjusted[j] - 0.2097) <= 5e-4 for j in range(3))
        assert rep.rejected == frozenset()


def test_criterion_4_final_analysis():
    with criterion(4, "final analysis, both methods"):
        design = example_design()
        data = example_data()
        bonf = closed_test_report(2, ALPHA, data, design, "bonferroni")
        wpgsd, elapsed = timed(closed_test_report, 2, ALPHA, data, design, "wpgsd")
        assert elapsed < 5.0, f"WPGSD closed test took {elapsed:.2f} s"
        for sub, b, w in zip(SUBSETS, FINAL_BONF, FINAL_WPGSD):
            assert abs(bonf.subset_p[sub] - b) <= 5e-4, (sub, bonf.subset_p[sub])
            assert abs(wpgsd.subset_p[sub] - w) <= 1e-3, (sub, wpgsd.subset_p[sub])
        for j, want in enumerate([0.0210, 0.0210, 0.0206]):
            assert abs(wpgsd.adjusted[j] - want) <= 1e-3
            assert abs(bonf.adjusted[j] - 0.0266) <= 5e-4
        assert wpgsd.rejected == frozenset({0, 1, 2})
        assert bonf.rejected == frozenset()


def test_criterion_5_dominance():
    with criterion(5, "WPGSD never above Bonferroni"):
        design = example_design()
        data = example_data()
        bonf = SequentialEngine(design, data, "bonferroni")
        wpgsd = SequentialEngine(design, data, "wpgsd")
        for k in (1, 2):
            for sub in SUBSETS:
                pb, pw = bonf.sequential_p(sub, k), wpgsd.sequential_p(sub, k)
                if len(sub) >= 2:
                    assert pw < pb, (sub, k, pw, pb)
                else:
                    assert abs(pw - pb) <= 1e-6, (sub, k, pw, pb)


def test_criterion_6_oracles():
    with criterion(6, "grid, Monte Carlo and shortcut oracles"):
        # (a) root search against a refined level grid with final step 1e-4
        interior = 0
        for seed in range(50):
            rng = np.random.default_rng(5000 + seed)
            design, data = random_design(rng, mvn=MVNSettings(tol=1e-6))
            method = ("bonferroni", "wpgsd")[seed % 2]
            sub = tuple(range(design.m))
            k = design.K
            p = SequentialEngine(design, data, method).sequential_p(sub, k)
            ref = grid_sequential_p(sub, k, data, design, method)
            assert abs(p - ref) <= 1e-4, f"(a) seed {seed}: {p} vs grid {ref}"
            interior += 1e-3 < p < 0.99
        assert interior >= 25, f"(a) only {interior} designs with an interior p-value"

        # (b) union crossing probability against plain Monte Carlo
        for seed in range(10):
            rng = np.random.default_rng(7000 + seed)
            dim = int(rng.integers(2, 7))
            c = random_correlation(dim, rng)
            b = rng.uniform(1.5, 2.8, size=dim)
            r = union_crossing_probability(b, c)
            p, se = mc_union(b, c, 10_000_000, rng)
            assert abs(r.value - p) <= 3 * se, f"(b) seed {seed}: {r.value} vs {p} +- {se}"

        # (c) Bonferroni shortcut against the full closed test
        for seed in range(200):
            rng = np.random.default_rng(9000 + seed)
            design, data = random_design(rng)
            rep = closed_test_report(design.K, ALPHA, data, design, "bonferroni")
            assert set(bonferroni_shortcut(design.K, ALPHA, data, design)) == set(rep.rejected), f"(c) seed {seed}"


def test_criterion_7_invariants():
    with criterion(7, "structural invariants"):
        for seed in range(20):
            rng = np.random.default_rng(11000 + seed)
            design, data = random_design(rng, K=2, mvn=MVNSettings(tol=1e-6))
            method = ("bonferroni", "wpgsd")[seed % 2]
            eng = SequentialEngine(design, data, method)
            for sub in enumerate_closure(design.m):
                assert eng.sequential_p(sub, 2) <= eng.sequential_p(sub, 1)
            for k in (1, 2):
                rep = closed_test_report(k, ALPHA, data, design, method, engine=eng)
                for j in range(design.m):
                    assert rep.adjusted[j] >= rep.subset_p[(j,)]
                assert rep.rejected == frozenset(j for j in range(design.m) if rep.adjusted[j] <= ALPHA)
        for seed in range(50):
            rng = np.random.default_rng(13000 + seed)
            m = int(rng.integers(3, 6))
            w, g = random_strategy(m, rng)
            keep = sorted(rng.choice(m, size=int(rng.integers(1, m)), replace=False).tolist())
            drop = [i for i in range(m) if i not in keep]
            base = removal_weights(w, g, keep)
            for order in itertools.permutations(drop):
                assert np.allclose(removal_weights(w, g, keep, order), base, atol=1e-12)


def test_criterion_8_fwer():
    with criterion(8, "familywise error under the global null"):
        design = example_design(MVNSettings(tol=1e-6))
        threads = os.cpu_count() or 1
        start = time.perf_counter()
        res = {
            m: simulate(SimulationPlan(design, 100_000, seed=2024, method=m, alpha=ALPHA), threads=threads)
            for m in ("bonferroni", "wpgsd")
        }
        elapsed = time.perf_counter() - start
        assert elapsed < 60, f"took {elapsed:.1f} s"
        for m, r in res.items():
            assert r.fwer <= ALPHA + 3 * r.fwer_se, f"{m}: {r.fwer} (SE {r.fwer_se})"
        assert res["bonferroni"].fwer <= res["wpgsd"].fwer
