"""k-NN semantic graph over seen/unseen classes and its transition matrices.

Seen classes are transient states, unseen classes are absorbing states.
The graph is kept as two dense blocks: ``seen_weights`` (p x p, symmetric)
and ``attach_weights`` (p x q, seen-to-unseen). A zero entry means "no
edge". There is no unseen x unseen block, so an edge between two unseen
nodes cannot be represented at all.
"""

from __future__ import annotations

import json
from collections import deque
from dataclasses import dataclass, field
from typing import IO, Iterable, Iterator, Sequence

import numpy as np

from . import _jsonfmt
from .embed import EmbeddingTable, cosine_matrix
from .errors import (
    DanglingTransient,
    DimensionMismatch,
    EmptySide,
    IsolatedUnseen,
    NameCollision,
    TooFewClasses,
    UnreachableAbsorber,
    UnseenEdge,
)

ROW_SUM_TOL = 1e-12


def _readonly(a: np.ndarray) -> np.ndarray:
    a = np.array(a, dtype=float)
    a.setflags(write=False)
    return a


def top_k_indices(scores: np.ndarray, k: int, exclude: int | None = None) -> np.ndarray:
    """Indices of the ``k`` largest scores; ties go to the lower index."""
    order = np.argsort(-scores, kind="stable")
    if exclude is not None:
        order = order[order != exclude]
    return order[:k]


@dataclass(frozen=True)
class SemanticGraph:
    seen_names: tuple[str, ...]
    unseen_names: tuple[str, ...]
    seen_weights: np.ndarray
    attach_weights: np.ndarray
    # seen prototypes, kept so unseen classes can be attached later
    seen_prototypes: EmbeddingTable | None = field(default=None, repr=False, compare=False)

    def __post_init__(self):
        seen = tuple(self.seen_names)
        unseen = tuple(self.unseen_names)
        p, q = len(seen), len(unseen)
        if len(set(seen)) != p or len(set(unseen)) != q:
            raise NameCollision("duplicate node names")
        overlap = set(seen) & set(unseen)
        if overlap:
            raise NameCollision(f"names both seen and unseen: {sorted(overlap)}")
        W = _readonly(np.asarray(self.seen_weights, dtype=float).reshape(p, p))
        A = _readonly(np.asarray(self.attach_weights, dtype=float).reshape(p, q))
        if np.any(W < 0) or np.any(A < 0) or not (np.all(np.isfinite(W)) and np.all(np.isfinite(A))):
            raise ValueError("edge weights must be finite and nonnegative")
        if not np.array_equal(W, W.T):
            raise ValueError("seen-subgraph weights must be symmetric")
        if np.any(np.diag(W) != 0):
            raise ValueError("self-loops are not allowed")
        object.__setattr__(self, "seen_names", seen)
        object.__setattr__(self, "unseen_names", unseen)
        object.__setattr__(self, "seen_weights", W)
        object.__setattr__(self, "attach_weights", A)

    @property
    def p(self) -> int:
        return len(self.seen_names)

    @property
    def q(self) -> int:
        return len(self.unseen_names)

    @classmethod
    def from_edges(
        cls,
        seen: Sequence[str],
        unseen: Sequence[str],
        edges: Iterable[tuple[str, str, float]],
    ) -> SemanticGraph:
        """Build a graph from an explicit undirected edge list.

        Seen-seen edges are stored symmetrically. Listing the same pair twice
        is an error.
        """
        seen_idx = {n: i for i, n in enumerate(seen)}
        unseen_idx = {n: j for j, n in enumerate(unseen)}
        W = np.zeros((len(seen), len(seen)))
        A = np.zeros((len(seen), len(unseen)))
        for a, b, w in edges:
            w = float(w)
            if not w > 0:
                raise ValueError(f"edge {a}-{b}: weight must be positive, got {w}")
            if a in unseen_idx and b in unseen_idx:
                raise UnseenEdge(f"edge {a}-{b} joins two unseen classes")
            if a in unseen_idx:
                a, b = b, a
            if a not in seen_idx or (b not in seen_idx and b not in unseen_idx):
                raise KeyError(f"edge {a}-{b} references an unknown node")
            i = seen_idx[a]
            if b in seen_idx:
                j = seen_idx[b]
                if i == j:
                    raise ValueError(f"self-loop on {a}")
                if W[i, j]:
                    raise ValueError(f"duplicate edge {a}-{b}")
                W[i, j] = W[j, i] = w
            else:
                j = unseen_idx[b]
                if A[i, j]:
                    raise ValueError(f"duplicate edge {a}-{b}")
                A[i, j] = w
        return cls(tuple(seen), tuple(unseen), W, A)

    def edges(self) -> Iterator[tuple[str, str, float]]:
        """Undirected edges, seen-seen pairs first (each listed once)."""
        ii, jj = np.nonzero(np.triu(self.seen_weights, k=1))
        for i, j in zip(ii, jj):
            yield self.seen_names[i], self.seen_names[j], float(self.seen_weights[i, j])
        ii, jj = np.nonzero(self.attach_weights)
        for i, j in zip(ii, jj):
            yield self.seen_names[i], self.unseen_names[j], float(self.attach_weights[i, j])

    def to_dict(self) -> dict:
        return {
            "seen": list(self.seen_names),
            "unseen": list(self.unseen_names),
            "edges": [[a, b, w] for a, b, w in self.edges()],
        }

    def dump_json(self, fh: IO[str] | None = None) -> str:
        text = _jsonfmt.dumps(self.to_dict())
        if fh is not None:
            fh.write(text + "\n")
        return text

    @classmethod
    def from_json(cls, text: str) -> SemanticGraph:
        data = json.loads(text)
        return cls.from_edges(data["seen"], data["unseen"], (tuple(e) for e in data["edges"]))


def build_seen_subgraph(seen_prototypes: EmbeddingTable, k_seen: int = 2) -> SemanticGraph:
    """Directed k-NN over seen classes, symmetrized as (W + W^T) / 2.

    Weights are cosine similarities clamped at zero; neighbors whose
    similarity is not positive contribute no edge.
    """
    p = len(seen_prototypes)
    if k_seen < 1:
        raise ValueError(f"k_seen must be positive, got {k_seen}")
    if p <= k_seen:
        raise TooFewClasses(f"need more than k_seen={k_seen} seen classes, got {p}")
    sim = cosine_matrix(seen_prototypes, seen_prototypes)
    W = np.zeros((p, p))
    for i in range(p):
        nbrs = top_k_indices(sim[i], k_seen, exclude=i)
        W[i, nbrs] = np.maximum(sim[i, nbrs], 0.0)
    W = (W + W.T) / 2.0
    return SemanticGraph(seen_prototypes.names, (), W, np.zeros((p, 0)), seen_prototypes)


def attach_unseen(
    graph: SemanticGraph,
    unseen_prototypes: EmbeddingTable,
    k_unseen: int = 4,
    seen_prototypes: EmbeddingTable | None = None,
) -> SemanticGraph:
    """Link every unseen class to its ``k_unseen`` most similar seen classes.

    ``seen_prototypes`` defaults to the table the graph was built from.
    """
    seen_prototypes = seen_prototypes if seen_prototypes is not None else graph.seen_prototypes
    if seen_prototypes is None:
        raise ValueError("graph carries no seen prototypes; pass seen_prototypes")
    if tuple(seen_prototypes.names) != graph.seen_names:
        raise DimensionMismatch("seen prototypes do not match the graph's seen classes")
    if k_unseen < 1:
        raise ValueError(f"k_unseen must be positive, got {k_unseen}")
    if graph.p < k_unseen:
        raise TooFewClasses(f"k_unseen={k_unseen} exceeds the {graph.p} seen classes")
    taken = set(graph.seen_names) | set(graph.unseen_names)
    for name in unseen_prototypes.names:
        if name in taken:
            raise NameCollision(f"unseen class {name!r} already in the graph")

    sim = cosine_matrix(seen_prototypes, unseen_prototypes)  # p x q_new
    new = np.zeros_like(sim)
    for j, name in enumerate(unseen_prototypes.names):
        nbrs = top_k_indices(sim[:, j], k_unseen)
        new[nbrs, j] = np.maximum(sim[nbrs, j], 0.0)
        if not np.any(new[:, j] > 0):
            raise IsolatedUnseen(f"unseen class {name!r} has no positively similar seen class")
    return SemanticGraph(
        graph.seen_names,
        graph.unseen_names + unseen_prototypes.names,
        graph.seen_weights,
        np.hstack([graph.attach_weights, new]),
        seen_prototypes,
    )


def build_semantic_graph(
    seen_prototypes: EmbeddingTable,
    unseen_prototypes: EmbeddingTable,
    k_seen: int = 2,
    k_unseen: int = 4,
) -> SemanticGraph:
    return attach_unseen(build_seen_subgraph(seen_prototypes, k_seen), unseen_prototypes, k_unseen)


@dataclass(frozen=True)
class TransitionSystem:
    """Canonical-form blocks ``Q`` (transient to transient) and ``R``
    (transient to absorbing). The absorbing rows ``[0 | I]`` are implicit."""

    Q: np.ndarray
    R: np.ndarray
    seen_names: tuple[str, ...]
    unseen_names: tuple[str, ...]

    def __post_init__(self):
        Q = _readonly(self.Q)
        R = _readonly(self.R)
        if Q.ndim != 2 or Q.shape[0] != Q.shape[1]:
            raise DimensionMismatch(f"Q must be square, got shape {Q.shape}")
        if R.ndim != 2 or R.shape[0] != Q.shape[0]:
            raise DimensionMismatch(f"R shape {R.shape} does not match Q shape {Q.shape}")
        p, q = R.shape
        if p == 0 or q == 0:
            raise EmptySide(f"need at least one transient and one absorbing state (p={p}, q={q})")
        if len(self.seen_names) != p or len(self.unseen_names) != q:
            raise DimensionMismatch("name orderings do not match matrix shapes")
        if np.any(Q < 0) or np.any(R < 0):
            raise ValueError("transition probabilities must be nonnegative")
        sums = Q.sum(axis=1) + R.sum(axis=1)
        if np.any(np.abs(sums - 1.0) > ROW_SUM_TOL):
            raise ValueError(f"rows of [Q|R] must sum to 1, worst deviation {np.max(np.abs(sums - 1.0)):.3g}")
        unreachable = _unreachable_states(Q, R)
        if unreachable:
            names = [self.seen_names[i] for i in unreachable]
            raise UnreachableAbsorber(f"no absorbing state reachable from {names}")
        object.__setattr__(self, "Q", Q)
        object.__setattr__(self, "R", R)
        object.__setattr__(self, "seen_names", tuple(self.seen_names))
        object.__setattr__(self, "unseen_names", tuple(self.unseen_names))

    @property
    def p(self) -> int:
        return self.Q.shape[0]

    @property
    def q(self) -> int:
        return self.R.shape[1]

    def full_matrix(self) -> np.ndarray:
        """The whole (p+q) x (p+q) canonical transition matrix."""
        p, q = self.p, self.q
        return np.block([[self.Q, self.R], [np.zeros((q, p)), np.eye(q)]])


def _unreachable_states(Q: np.ndarray, R: np.ndarray) -> list[int]:
    """Transient states with no positive-probability path to an absorber."""
    p = Q.shape[0]
    can_exit = R.sum(axis=1) > 0
    seen = set(np.flatnonzero(can_exit).tolist())
    queue = deque(seen)
    # walk edges backwards: i reaches absorption if Q[i, j] > 0 and j does
    preds = [np.flatnonzero(Q[:, j] > 0) for j in range(p)]
    while queue:
        j = queue.popleft()
        for i in preds[j]:
            if i not in seen:
                seen.add(int(i))
                queue.append(int(i))
    return [i for i in range(p) if i not in seen]


def transition_system(graph: SemanticGraph) -> TransitionSystem:
    """Row-normalize each seen node's incident edge weights into [Q | R]."""
    if graph.p == 0 or graph.q == 0:
        raise EmptySide(f"need seen and unseen classes (p={graph.p}, q={graph.q})")
    W = graph.seen_weights
    A = graph.attach_weights
    totals = W.sum(axis=1) + A.sum(axis=1)
    dangling = np.flatnonzero(totals <= 0)
    if dangling.size:
        names = [graph.seen_names[i] for i in dangling]
        raise DanglingTransient(f"seen classes without edges: {names}")
    Q = W / totals[:, None]
    R = A / totals[:, None]
    return TransitionSystem(Q, R, graph.seen_names, graph.unseen_names)
