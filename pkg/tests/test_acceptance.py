"""Acceptance suite: one test per criterion, each checked at its stated tolerance and time budget.

Run alone with ``pytest tests/test_acceptance.py -v``; the terminal summary
prints one PASS/FAIL line per criterion.
"""

import time
import timeit

import numpy as np
import pytest

from absorbing_zsl.chain import (
    PosteriorMatrix,
    absorbing_probabilities,
    score_batch,
    score_single,
    simulate_absorption,
)
from absorbing_zsl.classify import auc_binary, mean_class_accuracy
from absorbing_zsl.embed import EmbeddingTable
from absorbing_zsl.errors import UnreachableAbsorber
from absorbing_zsl.experiment import ExperimentConfig, benchmark_scaling, run_experiment
from absorbing_zsl.graph import build_semantic_graph, transition_system

from conftest import random_distribution, random_system
from test_classify import pair_count_auc


def random_rows(rng, n, p):
    return np.stack([random_distribution(rng, p) for _ in range(n)])


@pytest.mark.acceptance("exactness fixture")
def test_exactness_fixture(fixture_system, record_property):
    B = absorbing_probabilities(fixture_system)
    np.testing.assert_allclose(B, [[2 / 3, 1 / 3], [1 / 3, 2 / 3]], rtol=0, atol=1e-12)
    T = PosteriorMatrix([[1.0, 0.0]], fixture_system.seen_names)
    S = score_batch(T, fixture_system).scores
    np.testing.assert_allclose(S, [[2 / 3, 1 / 3]], rtol=0, atol=1e-12)

    def call():
        score_batch(T, fixture_system, absorbing_probabilities(fixture_system))

    per_call = np.median(timeit.repeat(call, number=100, repeat=7)) / 100
    record_property("detail", f"{per_call * 1e6:.1f} us per call")
    assert per_call < 1e-3


@pytest.mark.acceptance("formula equivalence")
def test_formula_equivalence(record_property):
    rng = np.random.default_rng(20240101)
    start = time.perf_counter()
    worst = 0.0
    for _ in range(100):
        ts = random_system(rng, p_max=20, q_max=10)
        T = random_rows(rng, 5, ts.p)
        batch = score_batch(T, ts).scores
        for t, row in zip(T, batch):
            worst = max(worst, float(np.max(np.abs(score_single(t, ts) - row))))
    elapsed = time.perf_counter() - start
    record_property("detail", f"max diff {worst:.2e}, {elapsed:.2f}s")
    assert worst < 1e-12
    assert elapsed < 5.0


@pytest.mark.acceptance("stochasticity")
def test_stochasticity(record_property):
    rng = np.random.default_rng(7)
    start = time.perf_counter()
    worst = 0.0
    for _ in range(200):
        ts = random_system(rng, p_max=20, q_max=10)
        B = absorbing_probabilities(ts)
        S = score_batch(random_rows(rng, 10, ts.p), ts, B).scores
        for M in (B, S):
            assert M.min() >= 0.0 and M.max() <= 1.0
            worst = max(worst, float(np.max(np.abs(M.sum(axis=1) - 1.0))))
    elapsed = time.perf_counter() - start
    record_property("detail", f"max row-sum error {worst:.2e}, {elapsed:.2f}s")
    assert worst <= 1e-9
    assert elapsed < 10.0


@pytest.mark.acceptance("oracle agreement")
def test_oracle_agreement(record_property):
    rng = np.random.default_rng(99)
    start = time.perf_counter()
    worst = 0.0
    for i in range(20):
        ts = random_system(rng, p_max=20, q_max=10)
        t = random_distribution(rng, ts.p)
        exact = t @ absorbing_probabilities(ts)
        empirical = simulate_absorption(ts, t, walks=100_000, seed=i)
        worst = max(worst, float(np.max(np.abs(empirical - exact))))
    elapsed = time.perf_counter() - start
    record_property("detail", f"max deviation {worst:.4f}, {elapsed:.2f}s")
    assert worst <= 0.015
    assert elapsed < 60.0


@pytest.mark.acceptance("linearity")
def test_linearity(record_property):
    start = time.perf_counter()
    cfg = ExperimentConfig(p=40, q=10, d=100, seed=0)
    bench = benchmark_scaling(cfg, [1000, 2000, 4000, 8000], repeats=15, min_time=0.05)
    elapsed = time.perf_counter() - start
    details, failures = [], []
    for method, secs in bench.seconds.items():
        r2 = bench.fit(method)["r2"]
        ratios = [b / a for a, b in zip(secs, secs[1:])]
        details.append(f"{method} r2={r2:.4f} ratios={','.join(f'{r:.2f}' for r in ratios)}")
        if r2 < 0.98 or not all(1.6 <= r <= 2.6 for r in ratios):
            failures.append(method)
    details.append(f"{elapsed:.1f}s")
    record_property("detail", "; ".join(details))
    assert not failures, details
    assert elapsed < 120.0


@pytest.mark.acceptance("K-stability")
def test_k_stability(record_property):
    start = time.perf_counter()
    cfg = ExperimentConfig(p=40, q=10, n=2000, d=100, topk=tuple(range(2, 11)), seed=0)
    sweep = run_experiment(cfg).k_sweep()
    elapsed = time.perf_counter() - start
    amp, ds = sweep["amp"]["std_mean_class_accuracy"], sweep["ds"]["std_mean_class_accuracy"]
    record_property("detail", f"std amp={amp:.4f} ds={ds:.4f}, {elapsed:.1f}s")
    assert amp <= ds
    assert elapsed < 60.0


@pytest.mark.acceptance("metrics correctness")
def test_metrics_correctness():
    rng = np.random.default_rng(3)
    for _ in range(100):
        n = int(rng.integers(2, 201))
        # coarse grid forces plenty of ties
        scores = rng.integers(0, 20, n) / 19 if rng.random() < 0.5 else rng.random(n)
        labels = rng.random(n) < rng.uniform(0.1, 0.9)
        labels[0], labels[1] = True, False
        assert auc_binary(scores, labels) == pair_count_auc(scores.tolist(), labels.tolist())

    assert mean_class_accuracy(["a", "b", "c"], ["a", "b", "c"], ["a", "b", "c"]) == 1.0
    assert mean_class_accuracy(["a", "b", "b", "b"], ["a", "a", "b", "b"], ["a", "b"]) == 0.75
    classes = ["a", "b", "c", "d"]
    assert mean_class_accuracy(["a"] * 8, classes * 2, classes) == 0.25


@pytest.mark.acceptance("graph structural suite")
def test_graph_structural_suite(record_property):
    rng = np.random.default_rng(42)
    outcomes = {"valid": 0, "unreachable": 0}
    for _ in range(100):
        p = int(rng.integers(3, 21))
        q = int(rng.integers(1, 11))
        d = int(rng.integers(2, 9))
        # positive orthant: every cosine is positive, so no seen node is left edgeless
        seen_vecs = np.abs(rng.standard_normal((p, d)))
        # unseen prototypes sit near seen ones, so none can be isolated
        anchors = rng.integers(0, p, q)
        unseen_vecs = np.abs(seen_vecs[anchors] + 0.05 * rng.standard_normal((q, d)))
        seen = EmbeddingTable(tuple(f"y{i}" for i in range(p)), seen_vecs)
        unseen = EmbeddingTable(tuple(f"z{j}" for j in range(q)), unseen_vecs)
        k_seen = int(rng.integers(1, min(4, p - 1) + 1))
        k_unseen = int(rng.integers(1, min(4, p) + 1))
        graph = build_semantic_graph(seen, unseen, k_seen, k_unseen)

        unseen_set = set(unseen.names)
        assert not any(a in unseen_set and b in unseen_set for a, b, _ in graph.edges())
        assert np.array_equal(graph.seen_weights, graph.seen_weights.T)
        try:
            ts = transition_system(graph)
        except UnreachableAbsorber:
            outcomes["unreachable"] += 1
            continue
        B = absorbing_probabilities(ts)
        assert np.all(np.isfinite(B))
        np.testing.assert_allclose(B.sum(axis=1), 1.0, atol=1e-9)
        outcomes["valid"] += 1
    record_property("detail", f"{outcomes['valid']} valid, {outcomes['unreachable']} unreachable")
    assert outcomes["valid"] > 0 and outcomes["unreachable"] > 0
