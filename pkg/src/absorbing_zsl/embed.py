"""Class embedding tables, cosine similarity and class prototypes."""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field
from typing import IO, Iterable, Sequence

import numpy as np

from .errors import DimensionMismatch, DuplicateName, EmptyList, ParseError, ZeroVector


@dataclass(frozen=True)
class EmbeddingTable:
    """Named class vectors living in one d-dimensional word space.

    Vectors are stored exactly as given (no normalization). The backing
    array is made read-only so the table can be shared freely.
    """

    names: tuple[str, ...]
    vectors: np.ndarray
    _index: dict[str, int] = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        names = tuple(str(n) for n in self.names)
        vectors = np.array(self.vectors, dtype=float)
        if vectors.ndim != 2:
            raise DimensionMismatch(f"vectors must be a 2-d array, got shape {vectors.shape}")
        if vectors.shape[0] != len(names):
            raise DimensionMismatch(f"{len(names)} names but {vectors.shape[0]} vectors")
        if vectors.shape[1] < 1:
            raise DimensionMismatch("dimension must be positive")
        if not np.all(np.isfinite(vectors)):
            raise ParseError("vectors contain non-finite values")
        index: dict[str, int] = {}
        for i, name in enumerate(names):
            if name in index:
                raise DuplicateName(f"duplicate class name {name!r}")
            index[name] = i
        zero = ~np.any(vectors != 0.0, axis=1)
        if np.any(zero):
            raise ZeroVector(f"zero vector for class {names[int(np.argmax(zero))]!r}")
        vectors.setflags(write=False)
        object.__setattr__(self, "names", names)
        object.__setattr__(self, "vectors", vectors)
        object.__setattr__(self, "_index", index)

    @classmethod
    def from_pairs(cls, pairs: Iterable[tuple[str, Sequence[float]]]) -> EmbeddingTable:
        pairs = list(pairs)
        if not pairs:
            raise EmptyList("embedding table needs at least one entry")
        dims = {len(v) for _, v in pairs}
        if len(dims) != 1:
            raise DimensionMismatch(f"ragged vectors with lengths {sorted(dims)}")
        return cls(tuple(n for n, _ in pairs), np.array([v for _, v in pairs], dtype=float))

    @property
    def dimension(self) -> int:
        return self.vectors.shape[1]

    def __len__(self) -> int:
        return len(self.names)

    def __contains__(self, name: object) -> bool:
        return name in self._index

    def index(self, name: str) -> int:
        return self._index[name]

    def vector(self, name: str) -> np.ndarray:
        return self.vectors[self._index[name]]

    def subset(self, names: Sequence[str]) -> EmbeddingTable:
        """Restrict to ``names`` in the given order."""
        missing = [n for n in names if n not in self._index]
        if missing:
            raise KeyError(f"classes not in table: {missing}")
        return EmbeddingTable(tuple(names), self.vectors[[self._index[n] for n in names]])


def load_embeddings(source: IO[bytes] | IO[str] | bytes | str) -> EmbeddingTable:
    """Parse ``class_name,v1,...,vd`` rows (UTF-8, no header).

    ``source`` may be a binary or text stream, or raw ``bytes``. Blank lines
    are skipped.
    """
    if isinstance(source, bytes):
        text = source.decode("utf-8")
    elif isinstance(source, str):
        text = source
    else:
        data = source.read()
        text = data.decode("utf-8") if isinstance(data, bytes) else data

    names: list[str] = []
    rows: list[list[float]] = []
    for lineno, row in enumerate(csv.reader(io.StringIO(text)), start=1):
        if not row or (len(row) == 1 and not row[0].strip()):
            continue
        name = row[0].strip()
        if not name:
            raise ParseError(f"line {lineno}: empty class name")
        if len(row) < 2:
            raise ParseError(f"line {lineno}: no vector components for {name!r}")
        try:
            values = [float(x) for x in row[1:]]
        except ValueError as exc:
            raise ParseError(f"line {lineno}: {exc}") from None
        if rows and len(values) != len(rows[0]):
            raise DimensionMismatch(
                f"line {lineno}: {len(values)} components, expected {len(rows[0])}"
            )
        names.append(name)
        rows.append(values)
    if not rows:
        raise ParseError("no embedding rows found")
    return EmbeddingTable(tuple(names), np.array(rows, dtype=float))


def read_embeddings(path) -> EmbeddingTable:
    with open(path, "rb") as fh:
        return load_embeddings(fh)


def write_embeddings(table: EmbeddingTable, fh: IO[str]) -> None:
    writer = csv.writer(fh, lineterminator="\n")
    for name, vec in zip(table.names, table.vectors):
        writer.writerow([name, *(repr(float(x)) for x in vec)])


def cosine_similarity(u, v) -> float:
    u = np.asarray(u, dtype=float)
    v = np.asarray(v, dtype=float)
    if u.shape != v.shape or u.ndim != 1:
        raise DimensionMismatch(f"shapes {u.shape} and {v.shape} differ")
    nu = np.linalg.norm(u)
    nv = np.linalg.norm(v)
    if nu == 0.0 or nv == 0.0:
        raise ZeroVector("cosine similarity is undefined for a zero vector")
    # clamp: rounding can land a hair outside [-1, 1]
    return float(np.clip(np.dot(u, v) / (nu * nv), -1.0, 1.0))


def unit_rows(vectors) -> np.ndarray:
    """Scale each row to unit Euclidean norm."""
    vectors = np.atleast_2d(np.asarray(vectors, dtype=float))
    norms = np.linalg.norm(vectors, axis=1)
    if np.any(norms == 0.0):
        raise ZeroVector("cannot normalize a zero vector")
    return vectors / norms[:, None]


def cosine_matrix(a, b) -> np.ndarray:
    """Pairwise cosine similarities between the rows of ``a`` and ``b``.

    Entries are clamped to [-1, 1].
    """
    a = unit_rows(a.vectors if isinstance(a, EmbeddingTable) else a)
    b = unit_rows(b.vectors if isinstance(b, EmbeddingTable) else b)
    if a.shape[1] != b.shape[1]:
        raise DimensionMismatch(f"dimensions {a.shape[1]} and {b.shape[1]} differ")
    return np.clip(a @ b.T, -1.0, 1.0)


def class_prototype(members) -> np.ndarray:
    """Mean of the member vectors, rescaled to unit norm."""
    members = [np.asarray(m, dtype=float) for m in members]
    if not members:
        raise EmptyList("prototype needs at least one member vector")
    if len({m.shape for m in members}) != 1 or members[0].ndim != 1:
        raise DimensionMismatch("member vectors must share one 1-d shape")
    mean = np.mean(members, axis=0)
    norm = np.linalg.norm(mean)
    if norm <= 1e-12 * max(np.linalg.norm(m) for m in members):
        raise ZeroVector("member vectors cancel to the zero vector")
    return mean / norm
