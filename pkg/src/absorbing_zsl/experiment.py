"""Experiment orchestration: datasets, method runs, K sweeps and benchmarks."""

from __future__ import annotations

import csv
import json
import logging
import time
import timeit
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path
from typing import Callable, Sequence

import numpy as np
from scipy.special import softmax

from .baselines import DS_NORMALIZATION, BipartiteSimilarity, conse_score_batch, ds_score_batch
from .chain import (
    AbsorptionResult,
    PosteriorMatrix,
    absorbing_probabilities,
    load_posteriors,
    read_name_list,
    score_batch,
    write_posteriors,
)
from .classify import ScoreReport, auc_binary, mean_class_accuracy, predict
from .embed import EmbeddingTable, cosine_matrix, read_embeddings, unit_rows, write_embeddings
from .errors import ConfigError, IsolatedUnseen, UnknownLabel, UnreachableAbsorber
from .graph import build_semantic_graph, transition_system

log = logging.getLogger(__name__)

METHODS = ("amp", "ds", "conse")
# rows scored per block; keeps the per-block working set cache-sized
BLOCK_ROWS = 1024


@dataclass
class ExperimentConfig:
    k_seen: int = 2
    k_unseen: int = 4
    topk: tuple[int, ...] = (5,)
    methods: tuple[str, ...] = METHODS
    seed: int = 0
    # file inputs; when ``embeddings`` is unset a synthetic dataset is generated
    embeddings: str | None = None
    posteriors: str | None = None
    seen_classes: str | None = None
    unseen_classes: str | None = None
    truth: str | None = None
    # synthetic generator
    p: int = 40
    q: int = 10
    n: int = 2000
    d: int = 100
    noise: float = 0.1
    tau: float = 0.05

    def __post_init__(self):
        if isinstance(self.topk, int):
            self.topk = (self.topk,)
        self.topk = tuple(int(k) for k in self.topk)
        if isinstance(self.methods, str):
            self.methods = tuple(m.strip() for m in self.methods.split(",") if m.strip())
        self.methods = tuple(self.methods)
        self.validate()

    def validate(self, p: int | None = None) -> None:
        unknown = [m for m in self.methods if m not in METHODS]
        if unknown or not self.methods:
            raise ConfigError(f"methods must be a nonempty subset of {METHODS}, got {self.methods}")
        for name in ("k_seen", "k_unseen"):
            if getattr(self, name) < 1:
                raise ConfigError(f"{name} must be positive")
        if not self.topk or min(self.topk) < 1:
            raise ConfigError(f"topk values must be positive, got {self.topk}")
        if self.noise < 0 or self.tau <= 0:
            raise ConfigError("noise must be >= 0 and tau > 0")
        if p is None and self.embeddings is None:
            p = self.p
            if self.q < 1 or self.n < self.q or self.d < 2:
                raise ConfigError(f"synthetic sizes need q >= 1, n >= q, d >= 2 (q={self.q}, n={self.n}, d={self.d})")
        if p is not None:
            if self.k_seen >= p:
                raise ConfigError(f"k_seen={self.k_seen} must be smaller than p={p}")
            if self.k_unseen > p:
                raise ConfigError(f"k_unseen={self.k_unseen} must not exceed p={p}")

    @classmethod
    def from_dict(cls, data: dict) -> ExperimentConfig:
        known = {f.name for f in fields(cls)}
        extra = set(data) - known
        if extra:
            raise ConfigError(f"unknown config keys: {sorted(extra)}")
        return cls(**data)

    @classmethod
    def from_json(cls, path) -> ExperimentConfig:
        with open(path, encoding="utf-8") as fh:
            return cls.from_dict(json.load(fh))

    def to_dict(self) -> dict:
        d = asdict(self)
        d["topk"] = list(self.topk)
        d["methods"] = list(self.methods)
        return d


@dataclass(frozen=True)
class ZSLDataset:
    """The inputs every method consumes: prototypes, posteriors, truth."""

    seen: EmbeddingTable
    unseen: EmbeddingTable
    posteriors: PosteriorMatrix
    truth: tuple[str, ...] | None = None

    def __post_init__(self):
        if self.posteriors.seen_names != self.seen.names:
            raise ConfigError("posterior columns do not follow the seen prototype order")
        if set(self.seen.names) & set(self.unseen.names):
            raise ConfigError("a class is listed as both seen and unseen")
        if self.seen.dimension != self.unseen.dimension:
            raise ConfigError("seen and unseen prototypes have different dimensions")
        if self.truth is not None:
            truth = tuple(self.truth)
            if len(truth) != self.posteriors.n:
                raise ConfigError(f"{len(truth)} truth labels for {self.posteriors.n} images")
            bad = sorted(set(truth) - set(self.unseen.names))
            if bad:
                raise UnknownLabel(f"truth labels that are not unseen classes: {bad}")
            object.__setattr__(self, "truth", truth)

    @property
    def embeddings(self) -> EmbeddingTable:
        return EmbeddingTable(
            self.seen.names + self.unseen.names, np.vstack([self.seen.vectors, self.unseen.vectors])
        )

    def head(self, n: int) -> ZSLDataset:
        truth = None if self.truth is None else self.truth[:n]
        return replace(self, posteriors=self.posteriors.head(n), truth=truth)

    def save(self, directory) -> dict[str, Path]:
        """Write the file layout read by :func:`load_dataset`."""
        out = Path(directory)
        out.mkdir(parents=True, exist_ok=True)
        paths = {
            "embeddings": out / "embeddings.csv",
            "posteriors": out / "posteriors.csv",
            "seen_classes": out / "seen_classes.txt",
            "unseen_classes": out / "unseen_classes.txt",
        }
        with open(paths["embeddings"], "w", encoding="utf-8") as fh:
            write_embeddings(self.embeddings, fh)
        with open(paths["posteriors"], "w", encoding="utf-8") as fh:
            write_posteriors(self.posteriors, fh)
        paths["seen_classes"].write_text("\n".join(self.seen.names) + "\n", encoding="utf-8")
        paths["unseen_classes"].write_text("\n".join(self.unseen.names) + "\n", encoding="utf-8")
        if self.truth is not None:
            paths["truth"] = out / "truth.csv"
            with open(paths["truth"], "w", encoding="utf-8", newline="") as fh:
                writer = csv.writer(fh, lineterminator="\n")
                writer.writerows(zip(self.posteriors.image_ids, self.truth))
        return paths


def load_dataset(
    embeddings, posteriors, seen_classes, unseen_classes, truth=None
) -> ZSLDataset:
    """Read a dataset from its file layout (all arguments are paths)."""
    table = read_embeddings(embeddings)
    with open(seen_classes, "rb") as fh:
        seen_names = read_name_list(fh)
    with open(unseen_classes, "rb") as fh:
        unseen_names = read_name_list(fh)
    try:
        seen = table.subset(seen_names)
        unseen = table.subset(unseen_names)
    except KeyError as exc:
        raise ConfigError(str(exc)) from None
    with open(posteriors, "rb") as fh:
        T = load_posteriors(fh, seen_names)
    labels = None
    if truth is not None:
        labels = read_truth(truth, T.image_ids)
    return ZSLDataset(seen, unseen, T, labels)


def read_truth(path, image_ids: Sequence[str]) -> tuple[str, ...]:
    """Read ``image_id,class_name`` rows and align them to ``image_ids``."""
    mapping: dict[str, str] = {}
    with open(path, encoding="utf-8", newline="") as fh:
        for row in csv.reader(fh):
            if not row or not row[0].strip():
                continue
            if len(row) != 2:
                raise ConfigError(f"truth rows must be image_id,class_name; got {row}")
            mapping[row[0].strip()] = row[1].strip()
    missing = [i for i in image_ids if i not in mapping]
    if missing:
        raise ConfigError(f"{len(missing)} images have no truth label (first: {missing[0]!r})")
    return tuple(mapping[i] for i in image_ids)


def generate_synthetic(
    p: int,
    q: int,
    n: int,
    d: int,
    noise: float = 0.1,
    seed: int = 0,
    tau: float = 0.05,
    k_seen: int = 2,
    k_unseen: int = 4,
    max_draws: int = 100,
) -> ZSLDataset:
    """Desk-scale stand-in for a real zero-shot benchmark.

    Class prototypes are uniform on the unit sphere. Each test image gets a
    truth unseen class (balanced: ``i mod q`` shuffled) and the posterior row
    ``softmax((cos(truth, seen) + noise * eps) / tau)`` with standard normal
    ``eps``, so the seen classes closest to the truth class carry the mass.

    Prototypes are redrawn (from the same stream) until the
    ``(k_seen, k_unseen)`` semantic graph reaches an absorbing state from
    every seen class.
    """
    if q < 1 or n < q or d < 2:
        raise ConfigError(f"need q >= 1, n >= q, d >= 2 (q={q}, n={n}, d={d})")
    if p < k_seen + 1 or p < k_unseen:
        raise ConfigError(f"p={p} too small for k_seen={k_seen}, k_unseen={k_unseen}")
    if noise < 0 or tau <= 0:
        raise ConfigError("noise must be >= 0 and tau > 0")
    rng = np.random.default_rng(seed)
    seen_names = tuple(f"seen{i:03d}" for i in range(p))
    unseen_names = tuple(f"unseen{j:03d}" for j in range(q))
    for _ in range(max_draws):
        V = unit_rows(rng.standard_normal((p + q, d)))
        seen = EmbeddingTable(seen_names, V[:p])
        unseen = EmbeddingTable(unseen_names, V[p:])
        try:
            transition_system(build_semantic_graph(seen, unseen, k_seen, k_unseen))
            break
        except (UnreachableAbsorber, IsolatedUnseen) as exc:
            log.debug("redrawing prototypes: %s", exc)
    else:
        raise ConfigError(f"no valid semantic graph after {max_draws} prototype draws")

    truth_idx = rng.permutation(np.arange(n) % q)
    sims = cosine_matrix(unseen.vectors, seen.vectors)[truth_idx]
    logits = (sims + noise * rng.standard_normal((n, p))) / tau
    T = softmax(logits, axis=1)
    image_ids = tuple(f"img{i:06d}" for i in range(n))
    return ZSLDataset(
        seen,
        unseen,
        PosteriorMatrix(T, seen_names, image_ids),
        tuple(unseen_names[j] for j in truth_idx),
    )


def bundled_fixture() -> ZSLDataset:
    """Two seen, two unseen classes on the unit circle.

    With ``k_seen = k_unseen = 1`` the graph is y1-y2, y1-z1, y2-z2 with
    equal weights, giving ``Q = [[0, 1/2], [1/2, 0]]`` and
    ``R = [[1/2, 0], [0, 1/2]]``. The single test image sits on y1.
    """
    h = np.sqrt(3.0) / 2.0
    seen = EmbeddingTable(("y1", "y2"), [[1.0, 0.0], [0.5, h]])
    unseen = EmbeddingTable(("z1", "z2"), [[0.5, -h], [-0.5, h]])
    return ZSLDataset(seen, unseen, PosteriorMatrix([[1.0, 0.0]], seen.names, ("x1",)), ("z1",))


def dataset_for(config: ExperimentConfig) -> ZSLDataset:
    if config.embeddings is None:
        return generate_synthetic(
            config.p, config.q, config.n, config.d, config.noise, config.seed, config.tau,
            config.k_seen, config.k_unseen,
        )
    needed = ("posteriors", "seen_classes", "unseen_classes")
    missing = [k for k in needed if getattr(config, k) is None]
    if missing:
        raise ConfigError(f"file input needs {missing}")
    return load_dataset(
        config.embeddings, config.posteriors, config.seen_classes, config.unseen_classes, config.truth
    )


# A scorer maps a truncated posterior matrix to an n x q score matrix; it
# closes over whatever its method precomputed once per dataset.
Scorer = Callable[[PosteriorMatrix], AbsorptionResult]


def prepare_method(method: str, data: ZSLDataset, config: ExperimentConfig) -> tuple[Scorer, dict[str, float]]:
    """One-time precomputation for ``method``; returns the scorer and timings."""
    timings: dict[str, float] = {}
    if method == "amp":
        t0 = time.perf_counter()
        graph = build_semantic_graph(data.seen, data.unseen, config.k_seen, config.k_unseen)
        ts = transition_system(graph)
        t1 = time.perf_counter()
        B = absorbing_probabilities(ts)
        t2 = time.perf_counter()
        timings = {"graph_build": t1 - t0, "precompute": t2 - t1}
        return (lambda T: score_batch(T, ts, B)), timings
    if method == "ds":
        t0 = time.perf_counter()
        sim = BipartiteSimilarity.from_prototypes(data.seen, data.unseen)
        timings = {"precompute": time.perf_counter() - t0}
        return (lambda T: ds_score_batch(T, sim)), timings
    if method == "conse":
        t0 = time.perf_counter()
        seen = EmbeddingTable(data.seen.names, unit_rows(data.seen.vectors))
        unseen = EmbeddingTable(data.unseen.names, unit_rows(data.unseen.vectors))
        timings = {"precompute": time.perf_counter() - t0}
        return (lambda T: conse_score_batch(T, seen, unseen)), timings
    raise ConfigError(f"unknown method {method!r}")


def score_in_blocks(scorer: Scorer, T: PosteriorMatrix, K: int, block_rows: int = BLOCK_ROWS) -> AbsorptionResult:
    """Truncate to top-``K`` and score ``T`` in independent row blocks."""
    parts = []
    names: tuple[str, ...] | None = None
    for start in range(0, T.n, block_rows):
        block = PosteriorMatrix(
            T.values[start : start + block_rows], T.seen_names, T.image_ids[start : start + block_rows]
        ).truncated(K)
        res = scorer(block)
        names = res.unseen_names
        parts.append(res.scores)
    if names is None:
        # empty batch: score nothing, but keep the class ordering
        probe = scorer(PosteriorMatrix(np.ones((1, T.p)) / T.p, T.seen_names, ("_",)))
        return AbsorptionResult(np.zeros((0, len(probe.unseen_names))), probe.unseen_names)
    return AbsorptionResult(np.vstack(parts), names)


def _metrics(result: AbsorptionResult, predictions: list[str], truth: Sequence[str] | None):
    """Per-class AUC, mean AUC and macro accuracy, tolerant of small test sets.

    Classes that have no positive or no negative image get AUC ``None``;
    accuracy is averaged over the classes present in ``truth``.
    """
    if truth is None:
        return {}, None, None
    truth_arr = np.asarray(truth, dtype=object)
    aucs: dict[str, float | None] = {}
    for j, name in enumerate(result.unseen_names):
        pos = truth_arr == name
        aucs[name] = auc_binary(result.scores[:, j], pos) if 0 < pos.sum() < pos.size else None
    valid = [a for a in aucs.values() if a is not None]
    mean_auc = float(np.mean(valid)) if valid else None
    present = [c for c in result.unseen_names if np.any(truth_arr == c)]
    acc = mean_class_accuracy(predictions, truth, present) if present else None
    return aucs, mean_auc, acc


@dataclass
class ExperimentResult:
    config: ExperimentConfig
    reports: list[ScoreReport]
    scores: dict[tuple[str, int], AbsorptionResult] = field(repr=False, default_factory=dict)

    def report(self, method: str, K: int) -> ScoreReport:
        for r in self.reports:
            if r.method == method and r.K == K:
                return r
        raise KeyError((method, K))

    def k_sweep(self) -> dict[str, dict[str, object]]:
        """Spread of mean class accuracy across the swept K values per method."""
        out = {}
        for method in self.config.methods:
            rows = [r for r in self.reports if r.method == method]
            accs = [r.mean_class_accuracy for r in rows if r.mean_class_accuracy is not None]
            out[method] = {
                "K": [r.K for r in rows],
                "mean_class_accuracy": [r.mean_class_accuracy for r in rows],
                "std_mean_class_accuracy": float(np.std(accs)) if accs else None,
            }
        return out

    def to_dict(self, include_timings: bool = True) -> dict:
        return {
            "config": self.config.to_dict(),
            "reports": [r.to_dict(include_timings) for r in self.reports],
            "k_sweep": self.k_sweep(),
        }

    def metric_rows(self) -> list[tuple[str, int, str, float]]:
        """Flat (method, K, metric, value) rows for plotting."""
        rows = []
        for r in self.reports:
            if r.mean_auc is not None:
                rows.append((r.method, r.K, "mean_auc", r.mean_auc))
            if r.mean_class_accuracy is not None:
                rows.append((r.method, r.K, "mean_class_accuracy", r.mean_class_accuracy))
            for name, auc in r.per_class_auc.items():
                if auc is not None:
                    rows.append((r.method, r.K, f"auc:{name}", auc))
            for stage, secs in r.timings.items():
                rows.append((r.method, r.K, f"time:{stage}", secs))
        return rows


def run_experiment(config: ExperimentConfig, data: ZSLDataset | None = None) -> ExperimentResult:
    """Run every requested (method, K) pair on one shared dataset."""
    if data is None:
        data = dataset_for(config)
    config.validate(p=len(data.seen))
    reports: list[ScoreReport] = []
    all_scores: dict[tuple[str, int], AbsorptionResult] = {}
    for method in config.methods:
        scorer, pre_timings = prepare_method(method, data, config)
        for K in config.topk:
            t0 = time.perf_counter()
            result = score_in_blocks(scorer, data.posteriors, K)
            predictions = predict(result)
            t1 = time.perf_counter()
            aucs, mean_auc, acc = _metrics(result, predictions, data.truth)
            t2 = time.perf_counter()
            metadata: dict[str, object] = {"K_effective": min(K, len(data.seen))}
            if method == "ds":
                metadata["ds_normalization"] = DS_NORMALIZATION
            reports.append(
                ScoreReport(
                    method=method,
                    K=K,
                    predictions=predictions,
                    per_class_auc=aucs,
                    mean_auc=mean_auc,
                    mean_class_accuracy=acc,
                    timings={**pre_timings, "scoring": t1 - t0, "evaluate": t2 - t1},
                    metadata=metadata,
                )
            )
            all_scores[(method, K)] = result
            log.info("%s K=%d mean_acc=%s mean_auc=%s", method, K, acc, mean_auc)
    return ExperimentResult(config, reports, all_scores)


@dataclass
class BenchmarkResult:
    n_values: list[int]
    seconds: dict[str, list[float]]
    K: int

    def fit(self, method: str) -> dict[str, float]:
        """Least-squares line ``seconds = slope * n + intercept`` and its R^2."""
        n = np.asarray(self.n_values, dtype=float)
        y = np.asarray(self.seconds[method], dtype=float)
        if n.size < 2 or np.ptp(n) == 0:
            return {"slope": float("nan"), "intercept": float("nan"), "r2": float("nan")}
        slope, intercept = np.polyfit(n, y, 1)
        ss_res = float(np.sum((y - (slope * n + intercept)) ** 2))
        ss_tot = float(np.sum((y - y.mean()) ** 2))
        r2 = 1.0 - ss_res / ss_tot if ss_tot > 0 else 1.0
        return {"slope": float(slope), "intercept": float(intercept), "r2": r2}

    def rows(self) -> list[tuple[str, int, float]]:
        return [(m, n, s) for m, secs in self.seconds.items() for n, s in zip(self.n_values, secs)]

    def to_dict(self) -> dict:
        return {
            "K": self.K,
            "n_values": list(self.n_values),
            "seconds": {m: list(s) for m, s in self.seconds.items()},
            "fit": {m: self.fit(m) for m in self.seconds},
        }


def _loop_size(timer: timeit.Timer, min_time: float) -> int:
    number = 1
    while timer.timeit(number) < min_time:
        number *= 2
    return number


def _time_interleaved(fns: Sequence[Callable[[], object]], repeats: int, min_time: float) -> list[float]:
    """Best per-call wall time of each ``fn``, timed round-robin.

    Every round visits every function once, so a transient slowdown of the
    machine hits all sizes alike instead of skewing one of them.
    """
    timers = [timeit.Timer(fn) for fn in fns]
    numbers = [_loop_size(t, min_time) for t in timers]
    best = [float("inf")] * len(fns)
    for _ in range(repeats):
        for i, (timer, number) in enumerate(zip(timers, numbers)):
            best[i] = min(best[i], timer.timeit(number) / number)
    return best


def benchmark_scaling(
    config: ExperimentConfig,
    n_values: Sequence[int],
    data: ZSLDataset | None = None,
    repeats: int = 7,
    min_time: float = 0.05,
) -> BenchmarkResult:
    """Time the per-image stage (truncate, score, predict) at each ``n``.

    One-time precomputation is done before any timing. ``n = 0`` records
    zero seconds. The K used is the first entry of ``config.topk``.
    """
    n_values = [int(n) for n in n_values]
    if any(n < 0 for n in n_values):
        raise ConfigError("n values must be nonnegative")
    n_max = max(n_values, default=0)
    if data is None:
        if config.embeddings is None:
            size = max(n_max, config.q)
            config = replace(config, n=size)
        data = dataset_for(config)
    if data.posteriors.n < n_max:
        raise ConfigError(f"dataset has {data.posteriors.n} images, benchmark needs {n_max}")
    config.validate(p=len(data.seen))
    K = config.topk[0]
    seconds: dict[str, list[float]] = {}
    for method in config.methods:
        scorer, _ = prepare_method(method, data, config)
        sizes = [n for n in n_values if n > 0]
        calls = [
            (lambda T=data.posteriors.head(n): predict(score_in_blocks(scorer, T, K)))
            for n in sizes
        ]
        timed = dict(zip(sizes, _time_interleaved(calls, repeats, min_time)))
        seconds[method] = [timed.get(n, 0.0) for n in n_values]
    return BenchmarkResult(n_values, seconds, K)
