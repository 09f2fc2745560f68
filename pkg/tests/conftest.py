import numpy as np
import pytest

from absorbing_zsl.errors import UnreachableAbsorber
from absorbing_zsl.graph import SemanticGraph, TransitionSystem, transition_system


def random_graph(rng: np.random.Generator, p_max: int = 20, q_max: int = 10) -> SemanticGraph:
    """Random sparse semantic graph: symmetric seen block, every unseen node attached."""
    p = int(rng.integers(1, p_max + 1))
    q = int(rng.integers(1, q_max + 1))
    density = rng.uniform(0.1, 0.6)
    W = np.triu(rng.uniform(0.05, 1.0, (p, p)) * (rng.random((p, p)) < density), k=1)
    W = W + W.T
    A = rng.uniform(0.05, 1.0, (p, q)) * (rng.random((p, q)) < rng.uniform(0.05, 0.4))
    for j in range(q):
        if not A[:, j].any():
            A[rng.integers(p), j] = rng.uniform(0.05, 1.0)
    for i in range(p):
        if not (W[i].any() or A[i].any()):
            A[i, rng.integers(q)] = rng.uniform(0.05, 1.0)
    return SemanticGraph(
        tuple(f"y{i}" for i in range(p)), tuple(f"z{j}" for j in range(q)), W, A
    )


def random_system(rng: np.random.Generator, p_max: int = 20, q_max: int = 10) -> TransitionSystem:
    """Valid transition system from a random graph; redraws unreachable ones."""
    while True:
        try:
            return transition_system(random_graph(rng, p_max, q_max))
        except UnreachableAbsorber:
            continue


def random_distribution(rng: np.random.Generator, p: int) -> np.ndarray:
    t = rng.random(p) * (rng.random(p) < 0.6)
    if not t.any():
        t[rng.integers(p)] = 1.0
    return t / t.sum()


@pytest.fixture
def fixture_system() -> TransitionSystem:
    """y1-y2, y1-z1, y2-z2, all weights 1."""
    graph = SemanticGraph.from_edges(
        ["y1", "y2"], ["z1", "z2"], [("y1", "y2", 1.0), ("y1", "z1", 1.0), ("y2", "z2", 1.0)]
    )
    return transition_system(graph)


@pytest.fixture
def make_system():
    return random_system


@pytest.fixture
def make_distribution():
    return random_distribution


# acceptance summary: one PASS/FAIL line per criterion at the end of the run
_ACCEPTANCE: list[tuple[str, bool, str]] = []


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    marker = item.get_closest_marker("acceptance")
    if marker is None:
        return
    if rep.when == "call" or (rep.when == "setup" and not rep.passed):
        detail = "; ".join(str(v) for k, v in item.user_properties if k == "detail")
        _ACCEPTANCE.append((marker.args[0], rep.passed, detail))


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for name, passed, detail in _ACCEPTANCE:
        line = f"[{'PASS' if passed else 'FAIL'}] {name}"
        if detail:
            line += f"  ({detail})"
        terminalreporter.write_line(line)
