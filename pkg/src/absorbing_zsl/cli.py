"""Command-line driver: ``run``, ``synth``, ``bench`` and ``graph``."""

from __future__ import annotations

import argparse
import csv
import logging
import sys
from dataclasses import replace
from pathlib import Path

from . import _jsonfmt
from .errors import ZSLError
from .experiment import (
    ExperimentConfig,
    benchmark_scaling,
    dataset_for,
    generate_synthetic,
    run_experiment,
)
from .graph import build_semantic_graph

log = logging.getLogger("absorbing_zsl")


def _int_list(text: str) -> list[int]:
    try:
        return [int(x) for x in text.split(",") if x.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from None


def _k_range(text: str) -> list[int]:
    # accepts "5", "2,5,8" or "1-10"
    if "-" in text and "," not in text:
        lo, hi = text.split("-", 1)
        return list(range(int(lo), int(hi) + 1))
    return _int_list(text)


def _common(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", type=Path, help="JSON experiment config; flags override it")
    parser.add_argument("--k-seen", type=int, dest="k_seen")
    parser.add_argument("--k-unseen", type=int, dest="k_unseen")
    parser.add_argument("--topk", type=_k_range, help="K, K1,K2,... or a range like 1-10")
    parser.add_argument("--methods", help="comma-separated subset of amp,ds,conse")
    parser.add_argument("--seed", type=int)
    parser.add_argument("--out", type=Path, help="output directory (or file for `graph`)")
    files = parser.add_argument_group("file inputs")
    files.add_argument("--embeddings", help="embeddings CSV: class_name,v1,...,vd")
    files.add_argument("--posteriors", help="posterior CSV: image_id,t1,...,tp")
    files.add_argument("--seen-classes", dest="seen_classes", help="seen_classes.txt")
    files.add_argument("--unseen-classes", dest="unseen_classes", help="unseen_classes.txt")
    files.add_argument("--truth", help="truth CSV: image_id,class_name")
    synth = parser.add_argument_group("synthetic data")
    for name, typ in (("p", int), ("q", int), ("n", int), ("d", int), ("noise", float), ("tau", float)):
        synth.add_argument(f"--{name}", type=typ)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="absorbing-zsl",
        description="Zero-shot classification by absorbing random walks on a semantic class graph.",
    )
    parser.add_argument("-v", "--verbose", action="count", default=0)
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="score test images and report metrics")
    _common(p_run)

    p_synth = sub.add_parser("synth", help="write a synthetic dataset to --out")
    _common(p_synth)

    p_bench = sub.add_parser("bench", help="time the per-image scoring stage against n")
    _common(p_bench)
    p_bench.add_argument("--n-values", type=_int_list, default=[1000, 2000, 4000, 8000], dest="n_values")
    p_bench.add_argument("--repeats", type=int, default=7)

    p_graph = sub.add_parser("graph", help="dump the semantic graph as JSON")
    _common(p_graph)
    return parser


def config_from_args(args: argparse.Namespace) -> ExperimentConfig:
    base = ExperimentConfig.from_json(args.config) if args.config else ExperimentConfig()
    overrides = {}
    for key in (
        "k_seen", "k_unseen", "seed", "embeddings", "posteriors", "seen_classes",
        "unseen_classes", "truth", "p", "q", "n", "d", "noise", "tau",
    ):
        value = getattr(args, key, None)
        if value is not None:
            overrides[key] = value
    if args.topk is not None:
        overrides["topk"] = tuple(args.topk)
    if args.methods is not None:
        overrides["methods"] = args.methods
    return replace(base, **overrides)


def _write_csv(path: Path, header, rows) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        for row in rows:
            writer.writerow([_jsonfmt.format_float(v) if isinstance(v, float) else v for v in row])


def cmd_run(config: ExperimentConfig, out: Path | None) -> int:
    result = run_experiment(config)
    if out is None:
        for r in result.reports:
            print(
                f"{r.method:6s} K={r.K:<3d} mean_acc={_fmt(r.mean_class_accuracy)} "
                f"mean_auc={_fmt(r.mean_auc)} scoring={r.timings['scoring']:.4g}s"
            )
        sweep = result.k_sweep()
        if len(config.topk) > 1:
            for method, info in sweep.items():
                print(f"{method:6s} std(mean_acc over K) = {_fmt(info['std_mean_class_accuracy'])}")
        return 0
    out.mkdir(parents=True, exist_ok=True)
    for r in result.reports:
        (out / f"report_{r.method}_K{r.K}.json").write_text(r.to_json() + "\n", encoding="utf-8")
    (out / "summary.json").write_text(_jsonfmt.dumps(result.to_dict()) + "\n", encoding="utf-8")
    _write_csv(out / "metrics.csv", ("method", "K", "metric", "value"), result.metric_rows())
    print(f"wrote {len(result.reports)} reports to {out}")
    return 0


def cmd_synth(config: ExperimentConfig, out: Path | None) -> int:
    if out is None:
        raise SystemExit("synth needs --out DIR")
    data = generate_synthetic(
        config.p, config.q, config.n, config.d, config.noise, config.seed, config.tau,
        config.k_seen, config.k_unseen,
    )
    paths = data.save(out)
    print("\n".join(str(p) for p in paths.values()))
    return 0


def cmd_bench(config: ExperimentConfig, out: Path | None, n_values, repeats: int) -> int:
    bench = benchmark_scaling(config, n_values, repeats=repeats)
    for method, secs in bench.seconds.items():
        fit = bench.fit(method)
        cells = " ".join(f"n={n}:{s * 1e3:.3f}ms" for n, s in zip(bench.n_values, secs))
        print(f"{method:6s} {cells}  slope={fit['slope']:.3g}s/img r2={fit['r2']:.4f}")
    if out is not None:
        out.mkdir(parents=True, exist_ok=True)
        _write_csv(out / "timings.csv", ("method", "n", "seconds"), bench.rows())
        (out / "bench.json").write_text(_jsonfmt.dumps(bench.to_dict()) + "\n", encoding="utf-8")
    return 0


def cmd_graph(config: ExperimentConfig, out: Path | None) -> int:
    data = dataset_for(config)
    graph = build_semantic_graph(data.seen, data.unseen, config.k_seen, config.k_unseen)
    text = graph.dump_json()
    if out is None:
        print(text)
    else:
        out.write_text(text + "\n", encoding="utf-8")
    return 0


def _fmt(x) -> str:
    return "n/a" if x is None else f"{x:.4f}"


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.WARNING - 10 * min(args.verbose, 2),
        format="%(levelname)s %(name)s: %(message)s",
    )
    try:
        config = config_from_args(args)
        if args.command == "run":
            return cmd_run(config, args.out)
        if args.command == "synth":
            return cmd_synth(config, args.out)
        if args.command == "bench":
            return cmd_bench(config, args.out, args.n_values, args.repeats)
        return cmd_graph(config, args.out)
    except (ZSLError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
