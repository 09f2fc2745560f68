"""Absorbing-chain algebra for zero-shot scoring.

A test image enters the chain as an extra transient state that steps out to
seen classes with its (truncated) posterior row and is never stepped into.
Its absorption probabilities over the unseen classes reduce to
``t (I - Q)^{-1} R``; stacking all test rows gives ``S = T (I - Q)^{-1} R``
where the ``p x q`` factor depends only on the graph and is computed once.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field
from typing import IO, Sequence

import numpy as np

from .errors import (
    AllZeroRow,
    DimensionMismatch,
    NonDistribution,
    OrderingMismatch,
    ParseError,
    SingularSystem,
)
from .graph import TransitionSystem

RESIDUAL_TOL = 1e-9
DISTRIBUTION_TOL = 1e-9


@dataclass(frozen=True)
class PosteriorMatrix:
    """Rows of p(seen class | test image), one row per test image."""

    values: np.ndarray
    seen_names: tuple[str, ...]
    image_ids: tuple[str, ...] = field(default=())

    def __post_init__(self):
        values = np.array(self.values, dtype=float)
        if values.ndim == 1 and values.size == 0:
            values = values.reshape(0, len(self.seen_names))
        if values.ndim != 2:
            raise DimensionMismatch(f"posterior matrix must be 2-d, got shape {values.shape}")
        if values.shape[1] != len(self.seen_names):
            raise OrderingMismatch(
                f"{values.shape[1]} posterior columns but {len(self.seen_names)} seen class names"
            )
        if not np.all(np.isfinite(values)) or np.any(values < 0):
            raise ValueError("posterior entries must be finite and nonnegative")
        ids = tuple(self.image_ids) or tuple(f"img{i:05d}" for i in range(values.shape[0]))
        if len(ids) != values.shape[0]:
            raise DimensionMismatch(f"{len(ids)} image ids for {values.shape[0]} rows")
        values.setflags(write=False)
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "seen_names", tuple(self.seen_names))
        object.__setattr__(self, "image_ids", ids)

    @property
    def n(self) -> int:
        return self.values.shape[0]

    @property
    def p(self) -> int:
        return self.values.shape[1]

    def truncated(self, K: int) -> PosteriorMatrix:
        return PosteriorMatrix(truncate_topk_rows(self.values, K), self.seen_names, self.image_ids)

    def head(self, n: int) -> PosteriorMatrix:
        return PosteriorMatrix(self.values[:n], self.seen_names, self.image_ids[:n])


@dataclass(frozen=True)
class AbsorptionResult:
    scores: np.ndarray
    unseen_names: tuple[str, ...]

    def __post_init__(self):
        scores = np.array(self.scores, dtype=float)
        if scores.ndim != 2 or scores.shape[1] != len(self.unseen_names):
            raise DimensionMismatch(
                f"scores shape {scores.shape} does not match {len(self.unseen_names)} unseen classes"
            )
        scores.setflags(write=False)
        object.__setattr__(self, "scores", scores)
        object.__setattr__(self, "unseen_names", tuple(self.unseen_names))


def _solve_transient(ts: TransitionSystem, rhs: np.ndarray) -> np.ndarray:
    """Solve ``(I - Q) X = rhs`` by LU with partial pivoting."""
    A = np.eye(ts.p) - ts.Q
    try:
        X = np.linalg.solve(A, rhs)
    except np.linalg.LinAlgError as exc:
        raise SingularSystem(f"I - Q is singular: {exc}") from None
    if not np.all(np.isfinite(X)):
        raise SingularSystem("solve produced non-finite values")
    resid = np.max(np.abs(A @ X - rhs)) if X.size else 0.0
    if resid > RESIDUAL_TOL * max(1.0, float(np.max(np.abs(X)))):
        raise SingularSystem(f"solve residual {resid:.3g} too large; I - Q is ill-conditioned")
    return X


def fundamental_matrix(ts: TransitionSystem) -> np.ndarray:
    """``N = (I - Q)^{-1}``; entry (i, j) is the expected visits to j from i."""
    N = _solve_transient(ts, np.eye(ts.p))
    return np.maximum(N, 0.0)


def absorbing_probabilities(ts: TransitionSystem) -> np.ndarray:
    """``B = (I - Q)^{-1} R``, the p x q matrix of absorption probabilities.

    Computed by a linear solve against ``R`` rather than forming ``N``.
    """
    B = _solve_transient(ts, ts.R)
    return np.clip(B, 0.0, 1.0)


def truncate_topk(t_row, K: int) -> np.ndarray:
    """Keep the ``K`` largest entries (ties to the lower index), renormalized."""
    row = np.asarray(t_row, dtype=float)
    if row.ndim != 1:
        raise DimensionMismatch(f"expected a 1-d row, got shape {row.shape}")
    return truncate_topk_rows(row[None, :], K)[0]


def truncate_topk_rows(T, K: int) -> np.ndarray:
    """Row-wise :func:`truncate_topk` on an ``n x p`` matrix."""
    T = np.asarray(T, dtype=float)
    if K < 1:
        raise ValueError(f"K must be positive, got {K}")
    if np.any(T < 0) or not np.all(np.isfinite(T)):
        raise ValueError("posterior rows must be finite and nonnegative")
    n, p = T.shape
    if K >= p:
        kept = T.copy()
    else:
        order = np.argsort(-T, axis=1, kind="stable")[:, :K]
        rows = np.arange(n)[:, None]
        kept = np.zeros_like(T)
        kept[rows, order] = T[rows, order]
    totals = kept.sum(axis=1)
    if np.any(totals <= 0):
        raise AllZeroRow(f"row {int(np.argmax(totals <= 0))} has no positive entry")
    return kept / totals[:, None]


def _check_order(T: PosteriorMatrix | np.ndarray, ts: TransitionSystem) -> np.ndarray:
    if isinstance(T, PosteriorMatrix):
        if T.seen_names != ts.seen_names:
            raise OrderingMismatch("posterior columns are not in the graph's seen-class order")
        return T.values
    T = np.asarray(T, dtype=float)
    if T.ndim != 2 or T.shape[1] != ts.p:
        raise OrderingMismatch(f"expected {ts.p} posterior columns, got shape {T.shape}")
    return T


def score_batch(
    T: PosteriorMatrix | np.ndarray,
    ts: TransitionSystem,
    absorption: np.ndarray | None = None,
) -> AbsorptionResult:
    """``S = T (I - Q)^{-1} R`` for a whole batch of test rows.

    Pass ``absorption`` (the output of :func:`absorbing_probabilities`) to
    reuse the one-time precomputation; the remaining cost is one
    ``n x p`` by ``p x q`` product.
    """
    values = _check_order(T, ts)
    B = absorbing_probabilities(ts) if absorption is None else absorption
    if B.shape != (ts.p, ts.q):
        raise DimensionMismatch(f"absorption matrix shape {B.shape} != {(ts.p, ts.q)}")
    return AbsorptionResult(np.clip(values @ B, 0.0, 1.0), ts.unseen_names)


def extended_system(t_row, ts: TransitionSystem) -> tuple[np.ndarray, np.ndarray]:
    """Transient blocks of the chain with the test node appended last.

    Returns ``(Q_ext, R_ext)`` of shapes ``(p+1, p+1)`` and ``(p+1, q)``.
    Only used to cross-check :func:`score_single`.
    """
    t = np.asarray(t_row, dtype=float)
    p, q = ts.p, ts.q
    Q_ext = np.zeros((p + 1, p + 1))
    Q_ext[:p, :p] = ts.Q
    Q_ext[p, :p] = t
    R_ext = np.vstack([ts.R, np.zeros((1, q))])
    return Q_ext, R_ext


def score_single(t_row, ts: TransitionSystem) -> np.ndarray:
    """Absorption probabilities of one test node via the block inverse.

    The last row of ``(I - Q_ext)^{-1}`` is ``[t (I - Q)^{-1}, 1]`` (the
    test node has no in-edges, so its diagonal block inverts to 1). Multiply
    it into ``R_ext``, whose last row is zero.
    """
    t = np.asarray(t_row, dtype=float)
    if t.shape != (ts.p,):
        raise OrderingMismatch(f"expected a row of length {ts.p}, got shape {t.shape}")
    # t (I - Q)^{-1} is the solution of (I - Q)^T x = t
    A_T = (np.eye(ts.p) - ts.Q).T
    try:
        visits = np.linalg.solve(A_T, t)
    except np.linalg.LinAlgError as exc:
        raise SingularSystem(f"I - Q is singular: {exc}") from None
    n_last = np.append(visits, 1.0)
    R_ext = np.vstack([ts.R, np.zeros((1, ts.q))])
    return np.clip(n_last @ R_ext, 0.0, 1.0)


def simulate_absorption(
    ts: TransitionSystem,
    start,
    walks: int,
    seed: int,
    max_steps: int = 1_000_000,
) -> np.ndarray:
    """Empirical absorption frequencies from ``walks`` seeded random walks.

    All walks advance in lock-step; each step draws one uniform per live
    walk and inverts the cumulative row of ``[Q | R]``.
    """
    start = np.asarray(start, dtype=float)
    if start.shape != (ts.p,):
        raise OrderingMismatch(f"start must have length {ts.p}, got shape {start.shape}")
    if np.any(start < 0) or abs(start.sum() - 1.0) > DISTRIBUTION_TOL:
        raise NonDistribution(f"start distribution sums to {start.sum()!r}")
    if walks < 1:
        raise ValueError(f"walks must be positive, got {walks}")

    p, q = ts.p, ts.q
    rng = np.random.default_rng(seed)
    cdf = np.cumsum(np.hstack([ts.Q, ts.R]), axis=1)
    start_cdf = np.cumsum(start)

    state = np.searchsorted(start_cdf, rng.random(walks) * start_cdf[-1], side="right")
    live = np.arange(walks)
    absorbed = np.empty(walks, dtype=np.intp)
    for _ in range(max_steps):
        if live.size == 0:
            break
        rows = cdf[state]
        u = rng.random(live.size) * rows[:, -1]
        nxt = (rows <= u[:, None]).sum(axis=1)
        done = nxt >= p
        absorbed[live[done]] = nxt[done] - p
        live = live[~done]
        state = nxt[~done]
    else:
        raise RuntimeError(f"{live.size} walks still transient after {max_steps} steps")
    return np.bincount(absorbed, minlength=q) / walks


def load_posteriors(
    source: IO[bytes] | IO[str] | bytes | str,
    seen_classes: Sequence[str] | IO[str] | IO[bytes],
) -> PosteriorMatrix:
    """Parse ``image_id,t1,...,tp`` rows whose columns follow ``seen_classes``.

    ``seen_classes`` is either a list of names or a stream in the
    one-name-per-line format of ``seen_classes.txt``.
    """
    if not isinstance(seen_classes, (list, tuple)):
        seen_classes = read_name_list(seen_classes)
    text = _as_text(source)
    ids: list[str] = []
    rows: list[list[float]] = []
    for lineno, row in enumerate(csv.reader(io.StringIO(text)), start=1):
        if not row or (len(row) == 1 and not row[0].strip()):
            continue
        if len(row) - 1 != len(seen_classes):
            raise OrderingMismatch(
                f"line {lineno}: {len(row) - 1} values for {len(seen_classes)} seen classes"
            )
        try:
            rows.append([float(x) for x in row[1:]])
        except ValueError as exc:
            raise ParseError(f"line {lineno}: {exc}") from None
        ids.append(row[0].strip())
    values = np.array(rows, dtype=float).reshape(len(rows), len(seen_classes))
    return PosteriorMatrix(values, tuple(seen_classes), tuple(ids))


def write_posteriors(T: PosteriorMatrix, fh: IO[str]) -> None:
    writer = csv.writer(fh, lineterminator="\n")
    for image_id, row in zip(T.image_ids, T.values):
        writer.writerow([image_id, *(repr(float(x)) for x in row)])


def read_name_list(source: IO[str] | IO[bytes] | bytes | str) -> list[str]:
    """One class name per line; blank lines ignored."""
    text = _as_text(source)
    return [line.strip() for line in text.splitlines() if line.strip()]


def _as_text(source) -> str:
    if isinstance(source, bytes):
        return source.decode("utf-8")
    if isinstance(source, str):
        return source
    data = source.read()
    return data.decode("utf-8") if isinstance(data, bytes) else data
