"""Bipartite direct-similarity (DS) and convex-embedding (ConSE) scorers.

Both consume the same truncated posterior rows and class prototypes as the
absorbing-chain method, so comparisons isolate the scoring rule.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .chain import AbsorptionResult, PosteriorMatrix
from .embed import EmbeddingTable, cosine_matrix, unit_rows
from .errors import DimensionMismatch, OrderingMismatch, ZeroVector

# DS uses the raw weighted sum; no per-class similarity normalization
DS_NORMALIZATION = "none"


@dataclass(frozen=True)
class BipartiteSimilarity:
    """Seen-to-unseen cosine similarities, shape ``(p, q)``."""

    sim: np.ndarray
    seen_names: tuple[str, ...]
    unseen_names: tuple[str, ...]

    def __post_init__(self):
        sim = np.array(self.sim, dtype=float)
        if sim.shape != (len(self.seen_names), len(self.unseen_names)):
            raise DimensionMismatch(f"similarity shape {sim.shape} does not match the name lists")
        if np.any(np.abs(sim) > 1.0):
            raise ValueError("cosine similarities must lie in [-1, 1]")
        sim.setflags(write=False)
        object.__setattr__(self, "sim", sim)
        object.__setattr__(self, "seen_names", tuple(self.seen_names))
        object.__setattr__(self, "unseen_names", tuple(self.unseen_names))

    @classmethod
    def from_prototypes(cls, seen: EmbeddingTable, unseen: EmbeddingTable) -> BipartiteSimilarity:
        return cls(cosine_matrix(seen, unseen), seen.names, unseen.names)


def ds_score(t_row, sim: BipartiteSimilarity) -> np.ndarray:
    """Similarity-weighted vote: ``score[j] = sum_i t[i] * sim[i, j]``."""
    t = np.asarray(t_row, dtype=float)
    if t.shape != (sim.sim.shape[0],):
        raise OrderingMismatch(f"row length {t.shape} does not match {sim.sim.shape[0]} seen classes")
    return t @ sim.sim


def ds_score_batch(T: PosteriorMatrix, sim: BipartiteSimilarity) -> AbsorptionResult:
    if T.seen_names != sim.seen_names:
        raise OrderingMismatch("posterior columns are not in the similarity matrix's seen order")
    return AbsorptionResult(T.values @ sim.sim, sim.unseen_names)


def _prototype_rows(prototypes) -> np.ndarray:
    if isinstance(prototypes, EmbeddingTable):
        prototypes = prototypes.vectors
    return unit_rows(prototypes)


def conse_embed(t_row, seen_prototypes) -> np.ndarray:
    """Convex combination of unit-normalized seen prototypes."""
    t = np.asarray(t_row, dtype=float)
    P = _prototype_rows(seen_prototypes)
    if t.shape != (P.shape[0],):
        raise OrderingMismatch(f"row length {t.shape} does not match {P.shape[0]} seen prototypes")
    v = t @ P
    if np.linalg.norm(v) <= 1e-12 * t.sum():
        raise ZeroVector("weighted prototypes cancel to the zero vector")
    return v


def conse_score(embedded, unseen_prototypes) -> np.ndarray:
    """Cosine similarity of an embedded test vector to each unseen prototype."""
    v = np.asarray(embedded, dtype=float)
    U = _prototype_rows(unseen_prototypes)
    if v.shape != (U.shape[1],):
        raise DimensionMismatch(f"embedded vector shape {v.shape} vs dimension {U.shape[1]}")
    norm = np.linalg.norm(v)
    if norm == 0.0:
        raise ZeroVector("cannot score a zero embedding")
    return np.clip(U @ (v / norm), -1.0, 1.0)


def conse_score_batch(
    T: PosteriorMatrix, seen_prototypes: EmbeddingTable, unseen_prototypes: EmbeddingTable
) -> AbsorptionResult:
    if T.seen_names != seen_prototypes.names:
        raise OrderingMismatch("posterior columns are not in the prototype table's order")
    P = _prototype_rows(seen_prototypes)
    U = _prototype_rows(unseen_prototypes)
    E = T.values @ P
    norms = np.linalg.norm(E, axis=1)
    if np.any(norms <= 1e-12):
        raise ZeroVector(f"row {int(np.argmax(norms <= 1e-12))} embeds to the zero vector")
    return AbsorptionResult(np.clip((E / norms[:, None]) @ U.T, -1.0, 1.0), unseen_prototypes.names)
