"""End-to-end experiment orchestration and the command-line interface.

A run follows the pipeline data -> pairwise distances -> neighbor embedding ->
task, over a configurable number of replicates; each replicate draws a
stratified subsample, recomputes the embedding dimension, and re-seeds every
randomized stage from the master seed, so identical configs give byte-identical
outputs. Distance matrices are cached per (subsample, metric, parameters)
fingerprint and never recomputed on a warm cache.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
import zlib
from dataclasses import dataclass, field, fields
from pathlib import Path

import numpy as np

from . import cluster as cluster_mod
from . import learn
from .distmat import (
    DistanceMatrix,
    MetricKind,
    compute_pairwise,
    dataset_fingerprint,
    load_cache,
    save_cache,
)
from .embed import (
    classical_mds,
    embedding_dimension,
    export_embedding_csv,
    isomap,
    laplacian_eigenmaps,
    tsne,
)
from .errors import ConfigError, SizeTooLarge, UotBenchError
from .measures import MeasureConversionParams, dataset_mean_mass, image_to_measure, read_uotd
from .stats import METRIC_ORDER, TaskResult, Verdict, verdict
from .transport import HKParams

logger = logging.getLogger(__name__)

ALL_METRICS = ("euclidean", "ot", "uot")
ALL_EMBEDDINGS = ("mds", "isomap", "tsne", "eigenmaps")
ALL_CLASSIFIERS = ("lda", "knn1", "knn3", "knn5", "svm", "mlr")
ALL_CLUSTERINGS = ("kmeans", "spectral")

TSNE_DIM = 3


@dataclass(frozen=True)
class ExperimentConfig:
    dataset: str = ""
    sample_size: int = 1000
    a: float = 0.97
    metrics: tuple = ALL_METRICS
    embeddings: tuple = ALL_EMBEDDINGS
    classifiers: tuple = ALL_CLASSIFIERS
    clusterings: tuple = ALL_CLUSTERINGS
    replicates: int = 10
    alpha: float = 0.05
    kappa: float = 1.0
    epsilon: float | None = None  # None selects the per-pair default
    tol: float = 1e-9
    max_iter: int = 10000
    neighbor_k: int = 10
    tsne_perplexity: float = 30.0
    tsne_iters: int = 1000
    seed: int = 0
    cache_dir: str = "cache"
    output_dir: str = "results"
    workers: int = 1

    def __post_init__(self):
        if not 0.0 < self.a < 1.0:
            raise ConfigError("a must lie in (0, 1)")
        if self.replicates < 2:
            raise ConfigError("replicates must be >= 2")
        for value, allowed, name in (
            (self.metrics, ALL_METRICS, "metrics"),
            (self.embeddings, ALL_EMBEDDINGS, "embeddings"),
            (self.classifiers, ALL_CLASSIFIERS, "classifiers"),
            (self.clusterings, ALL_CLUSTERINGS, "clusterings"),
        ):
            bad = [v for v in value if v not in allowed]
            if bad:
                raise ConfigError(f"unknown {name}: {bad}; allowed {allowed}")

    def hk_params(self) -> HKParams:
        return HKParams(kappa=self.kappa, epsilon=self.epsilon,
                        max_iter=self.max_iter, tol=self.tol)


_LIST_FIELDS = {"metrics", "embeddings", "classifiers", "clusterings"}
_INT_FIELDS = {"sample_size", "replicates", "max_iter", "neighbor_k", "tsne_iters",
               "seed", "workers"}
_FLOAT_FIELDS = {"a", "alpha", "kappa", "tol", "tsne_perplexity"}


def parse_config(text: str) -> ExperimentConfig:
    """Parse plain-text key=value lines; '#' starts a comment."""
    values = {}
    known = {f.name for f in fields(ExperimentConfig)}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected key=value, got {raw!r}")
        key, _, val = line.partition("=")
        key, val = key.strip(), val.strip()
        if key not in known:
            raise ConfigError(f"line {lineno}: unknown key {key!r}")
        if key in _LIST_FIELDS:
            values[key] = tuple(v.strip() for v in val.split(",") if v.strip())
        elif key in _INT_FIELDS:
            values[key] = int(val)
        elif key in _FLOAT_FIELDS:
            values[key] = float(val)
        elif key == "epsilon":
            values[key] = None if val in ("", "auto") else float(val)
        else:
            values[key] = val
    return ExperimentConfig(**values)


def subsample(labels, size: int, seed: int) -> np.ndarray:
    """Stratified proportional sample without replacement; deterministic in seed."""
    labels = np.asarray(labels)
    n = len(labels)
    if size > n:
        raise SizeTooLarge(f"requested {size} of {n} records")
    if size == n:
        return np.arange(n)
    classes, counts = np.unique(labels, return_counts=True)
    exact = size * counts / n
    quota = np.minimum(np.floor(exact).astype(int), counts)
    frac_order = np.lexsort((np.arange(len(classes)), -(exact - np.floor(exact))))
    remaining = size - quota.sum()
    while remaining > 0:
        for c in frac_order:
            if remaining == 0:
                break
            if quota[c] < counts[c]:
                quota[c] += 1
                remaining -= 1
    rng = np.random.default_rng(seed)
    picks = []
    for ci in range(len(classes)):
        members = np.flatnonzero(labels == classes[ci])
        perm = rng.permutation(len(members))
        picks.append(members[perm[: quota[ci]]])
    return np.sort(np.concatenate(picks))


def _stage_seed(master: int, *tags) -> np.random.SeedSequence:
    """Stable named seed derivation; strings hash via crc32."""
    entropy = [int(master) & 0xFFFFFFFF]
    for tag in tags:
        if isinstance(tag, str):
            entropy.append(zlib.crc32(tag.encode()))
        else:
            entropy.append(int(tag) & 0xFFFFFFFF)
    return np.random.SeedSequence(entropy)


def _seed_int(master: int, *tags) -> int:
    return int(_stage_seed(master, *tags).generate_state(1)[0])


@dataclass
class ExperimentResult:
    dataset: str
    config: ExperimentConfig
    cells: dict = field(default_factory=dict)     # (emb, algo, metric) -> TaskResult
    failures: dict = field(default_factory=dict)  # (emb, algo, metric) -> error string
    verdicts: dict = field(default_factory=dict)  # (emb, algo) -> Verdict | None
    solve_count: int = 0
    dimensions: list = field(default_factory=list)

    @property
    def algorithms(self) -> tuple:
        return tuple(self.config.classifiers) + tuple(self.config.clusterings)


def _metric_kind(cfg: ExperimentConfig, name: str) -> MetricKind:
    if name == "uot":
        return MetricKind("uot", hk=cfg.hk_params())
    return MetricKind(name)


def _cache_path(cfg: ExperimentConfig, dataset_stem: str, metric: str, fp: bytes) -> Path:
    return Path(cfg.cache_dir) / f"{dataset_stem}.{metric}.{fp.hex()[:16]}.uotm"


def _matrix_for(cfg, dataset_stem, metric_name, metric_kind, data, result) -> DistanceMatrix:
    fp = dataset_fingerprint(data, metric_kind)
    path = _cache_path(cfg, dataset_stem, metric_name, fp)
    if path.exists():
        try:
            matrix = load_cache(path, expected_fingerprint=fp, metric=metric_kind)
            logger.info("loaded %s from cache %s", metric_name, path.name)
            return matrix
        except UotBenchError as exc:
            logger.warning("cache %s unusable (%s); recomputing", path.name, exc)
    matrix = compute_pairwise(data, metric_kind, workers=cfg.workers)
    if metric_name in ("ot", "uot"):
        result.solve_count += matrix.n * (matrix.n - 1) // 2
    path.parent.mkdir(parents=True, exist_ok=True)
    save_cache(matrix, path)
    logger.info("computed %s matrix (n=%d) -> %s", metric_name, matrix.n, path.name)
    return matrix


def _embed(cfg, method, matrix, dim, seed):
    if method == "mds":
        return classical_mds(matrix, dim)
    if method == "isomap":
        return isomap(matrix, min(cfg.neighbor_k, matrix.n - 1), dim)
    if method == "eigenmaps":
        return laplacian_eigenmaps(matrix, min(cfg.neighbor_k, matrix.n - 1), dim)
    if method == "tsne":
        perplexity = min(cfg.tsne_perplexity, (matrix.n - 1) / 3 - 1e-9)
        return tsne(matrix, perplexity=perplexity, iters=cfg.tsne_iters,
                    seed=seed, dim=TSNE_DIM)
    raise ConfigError(f"unknown embedding {method!r}")


def _run_classifier(algo, train_x, train_y, test_x, seed):
    if algo.startswith("knn"):
        return learn.knn_predict(train_x, train_y, test_x, k=int(algo[3:]))
    if algo == "lda":
        return learn.lda_predict(learn.lda_fit(train_x, train_y, ridge=1e-3), test_x)
    if algo == "mlr":
        return learn.mlr_predict(learn.mlr_fit(train_x, train_y, l2=1e-4, iters=500), test_x)
    if algo == "svm":
        model = learn.linear_svm_fit(train_x, train_y, l2=1e-4, iters=20000, seed=seed)
        return learn.svm_predict(model, test_x)
    raise ConfigError(f"unknown classifier {algo!r}")


def run_experiment(cfg: ExperimentConfig) -> ExperimentResult:
    """Execute the configured benchmark; cell errors are recorded, not raised."""
    dataset = read_uotd(cfg.dataset)
    if cfg.sample_size > len(dataset):
        raise SizeTooLarge(f"sample_size {cfg.sample_size} > dataset size {len(dataset)}")
    stem = Path(cfg.dataset).stem
    result = ExperimentResult(dataset=stem, config=cfg)
    mean_mass = dataset_mean_mass([dataset.record(i) for i in range(len(dataset))])
    if mean_mass <= 0.0:
        raise ConfigError("dataset has zero mean mass")
    params_uot = MeasureConversionParams(normalize=False, mass_calibration=mean_mass)
    params_ot = MeasureConversionParams(normalize=True)

    accs: dict = {}
    for rep in range(cfg.replicates):
        idx = subsample(dataset.labels, cfg.sample_size, _seed_int(cfg.seed, rep, "subsample"))
        sub_labels = dataset.labels[idx]
        vectors = dataset.images[idx].reshape(len(idx), -1)
        report = embedding_dimension(vectors, cfg.a)
        dim = min(report.chosen_dimension, len(idx) - 2)
        result.dimensions.append(dim)
        logger.info("replicate %d: n=%d, embedding dimension %d (a=%g)",
                    rep, len(idx), dim, cfg.a)
        split = learn.split_80_20(len(idx), sub_labels, _seed_int(cfg.seed, rep, "split"))
        n_classes = len(np.unique(sub_labels))

        for metric_name in cfg.metrics:
            kind = _metric_kind(cfg, metric_name)
            try:
                if metric_name == "euclidean":
                    data = vectors / mean_mass
                elif metric_name == "ot":
                    data = [image_to_measure(dataset.record(i), params_ot) for i in idx]
                else:
                    data = [image_to_measure(dataset.record(i), params_uot) for i in idx]
                matrix = _matrix_for(cfg, stem, metric_name, kind, data, result)
            except UotBenchError as exc:
                for emb_name in cfg.embeddings:
                    for algo in result.algorithms:
                        result.failures[(emb_name, algo, metric_name)] = str(exc)
                logger.error("replicate %d: metric %s failed: %s", rep, metric_name, exc)
                continue

            for emb_name in cfg.embeddings:
                try:
                    emb = _embed(cfg, emb_name, matrix, dim,
                                 _seed_int(cfg.seed, rep, "tsne", metric_name))
                except UotBenchError as exc:
                    for algo in result.algorithms:
                        result.failures[(emb_name, algo, metric_name)] = str(exc)
                    logger.error("replicate %d: %s/%s failed: %s",
                                 rep, metric_name, emb_name, exc)
                    continue
                coords = emb.coords
                for algo in cfg.classifiers:
                    key = (emb_name, algo, metric_name)
                    if key in result.failures:
                        continue
                    try:
                        pred = _run_classifier(
                            algo, coords[split.train_indices], sub_labels[split.train_indices],
                            coords[split.test_indices],
                            _seed_int(cfg.seed, rep, "svm", metric_name, emb_name),
                        )
                        acc = learn.accuracy(pred, sub_labels[split.test_indices])
                        accs.setdefault(key, []).append(acc)
                    except UotBenchError as exc:
                        result.failures[key] = str(exc)
                for algo in cfg.clusterings:
                    key = (emb_name, algo, metric_name)
                    if key in result.failures:
                        continue
                    try:
                        seed = _seed_int(cfg.seed, rep, algo, metric_name, emb_name)
                        if algo == "kmeans":
                            labels = cluster_mod.kmeans(coords, n_classes, restarts=10, seed=seed)
                        else:
                            labels = cluster_mod.spectral_clustering(coords, n_classes, seed=seed)
                        acc = cluster_mod.assignment_accuracy(labels, sub_labels)
                        accs.setdefault(key, []).append(acc)
                    except UotBenchError as exc:
                        result.failures[key] = str(exc)

    for key, values in accs.items():
        if key in result.failures:
            continue
        if len(values) == cfg.replicates:
            emb_name, algo, metric_name = key
            result.cells[key] = TaskResult(
                dataset=stem, embedding=emb_name, algorithm=algo,
                metric=metric_name, accuracies=np.array(values),
            )
        else:
            result.failures[key] = f"only {len(values)}/{cfg.replicates} replicates succeeded"

    for emb_name in cfg.embeddings:
        for algo in result.algorithms:
            per_metric = {
                m: result.cells[(emb_name, algo, m)]
                for m in cfg.metrics
                if (emb_name, algo, m) in result.cells
            }
            if set(per_metric) == set(METRIC_ORDER):
                result.verdicts[(emb_name, algo)] = verdict(per_metric, alpha=cfg.alpha)
            else:
                result.verdicts[(emb_name, algo)] = None
    return result


# -- table emission ------------------------------------------------------------

_METRIC_LABEL = {"euclidean": "Euc", "ot": "OT", "uot": "UOT"}


def _fmt(x: float) -> str:
    return f"{x:.17g}"


def _verdict_tag(v: Verdict | None, metric: str) -> str:
    if v is None:
        return ""
    if v.outcome == "strict" and v.winner == metric:
        return "bold"
    if v.outcome == "bar" and v.winner == metric:
        return "bar"
    return ""


def emit_tables(result: ExperimentResult, output_dir=None, formats=("csv", "markdown")) -> list:
    """Write results.csv / results.md (plus raw results.json); returns written paths."""
    out = Path(output_dir if output_dir is not None else result.config.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    cfg = result.config
    written = []

    raw = {
        "dataset": result.dataset,
        "alpha": cfg.alpha,
        "metrics": list(cfg.metrics),
        "embeddings": list(cfg.embeddings),
        "algorithms": list(result.algorithms),
        "replicates": cfg.replicates,
        "cells": [
            {
                "embedding": k[0], "algorithm": k[1], "metric": k[2],
                "accuracies": [float(a) for a in tr.accuracies],
            }
            for k, tr in sorted(result.cells.items())
        ],
        "failures": [
            {"embedding": k[0], "algorithm": k[1], "metric": k[2], "error": msg}
            for k, msg in sorted(result.failures.items())
        ],
    }
    json_path = out / "results.json"
    json_path.write_text(json.dumps(raw, indent=2, sort_keys=True) + "\n")
    written.append(json_path)

    if "csv" in formats:
        lines = ["dataset,embedding,algorithm,metric,mean,std,p_vs_first_other,"
                 "p_vs_second_other,verdict"]
        for emb_name in cfg.embeddings:
            for algo in result.algorithms:
                v = result.verdicts.get((emb_name, algo))
                for metric in cfg.metrics:
                    key = (emb_name, algo, metric)
                    others = [m for m in METRIC_ORDER if m != metric and m in cfg.metrics]
                    if key in result.cells:
                        tr = result.cells[key]
                        ps = ["", ""]
                        if v is not None:
                            for slot, other in enumerate(others[:2]):
                                ps[slot] = _fmt(v.p_values[(metric, other)])
                        row = [result.dataset, emb_name, algo, metric,
                               _fmt(tr.mean), _fmt(tr.std), ps[0], ps[1],
                               _verdict_tag(v, metric)]
                    else:
                        err = "failed" if key in result.failures else ""
                        row = [result.dataset, emb_name, algo, metric, "", "", "", "", err]
                    lines.append(",".join(row))
        csv_path = out / "results.csv"
        csv_path.write_text("\n".join(lines) + "\n")
        written.append(csv_path)

    if "markdown" in formats:
        md = [f"# Results: {result.dataset}", ""]
        md.append("Cell format Euc|OT|UOT; **bold** = beats both others at "
                  f"alpha={cfg.alpha}; *starred* = best mean, beats exactly one other.")
        md.append("")
        md.append("| Embedding | Algorithm | " + " \\| ".join(
            _METRIC_LABEL[m] for m in cfg.metrics) + " |")
        md.append("|---|---|---|")
        for emb_name in cfg.embeddings:
            for algo in result.algorithms:
                v = result.verdicts.get((emb_name, algo))
                parts = []
                for metric in cfg.metrics:
                    key = (emb_name, algo, metric)
                    if key in result.cells:
                        text = f"{result.cells[key].mean:.2f}"
                        tag = _verdict_tag(v, metric)
                        if tag == "bold":
                            text = f"**{text}**"
                        elif tag == "bar":
                            text = f"*{text}*"
                    else:
                        text = "failed" if key in result.failures else "-"
                    parts.append(text)
                md.append(f"| {emb_name} | {algo} | " + " \\| ".join(parts) + " |")
        md_path = out / "results.md"
        md_path.write_text("\n".join(md) + "\n")
        written.append(md_path)
    return written


# -- command-line interface ------------------------------------------------------

def _cmd_run(args) -> int:
    cfg = parse_config(Path(args.config).read_text())
    result = run_experiment(cfg)
    paths = emit_tables(result)
    print(f"dataset={result.dataset} cells={len(result.cells)} "
          f"failures={len(result.failures)} transport_solves={result.solve_count}")
    for p in paths:
        print(f"wrote {p}")
    return 2 if result.failures else 0


def _cmd_distances(args) -> int:
    dataset = read_uotd(args.dataset)
    cfg = ExperimentConfig(dataset=args.dataset, kappa=args.kappa,
                           epsilon=args.epsilon, tol=args.tol, workers=args.workers)
    kind = _metric_kind(cfg, args.metric)
    mean_mass = dataset_mean_mass([dataset.record(i) for i in range(len(dataset))])
    if args.metric == "euclidean":
        data = dataset.images.reshape(len(dataset), -1) / mean_mass
    else:
        params = MeasureConversionParams(normalize=(args.metric == "ot"),
                                         mass_calibration=mean_mass)
        data = [image_to_measure(dataset.record(i), params) for i in range(len(dataset))]
    matrix = compute_pairwise(data, kind, workers=args.workers)
    save_cache(matrix, args.out)
    print(f"wrote {args.out} (n={matrix.n}, metric={args.metric})")
    return 0


def _cmd_embed(args) -> int:
    matrix = load_cache(args.cache)
    cfg = ExperimentConfig(neighbor_k=args.k, tsne_perplexity=args.perplexity,
                           tsne_iters=args.iters)
    emb = _embed(cfg, args.method, matrix, args.dim, args.seed)
    if args.dataset:
        labels = read_uotd(args.dataset).labels
    else:
        labels = np.full(matrix.n, -1)
    export_embedding_csv(emb, labels, args.out)
    print(f"wrote {args.out} (n={emb.n}, d={emb.d}, method={args.method})")
    return 0


def _cmd_report(args) -> int:
    raw = json.loads((Path(args.results_dir) / "results.json").read_text())
    cfg = ExperimentConfig(
        metrics=tuple(raw["metrics"]), embeddings=tuple(raw["embeddings"]),
        classifiers=tuple(a for a in raw["algorithms"] if a in ALL_CLASSIFIERS),
        clusterings=tuple(a for a in raw["algorithms"] if a in ALL_CLUSTERINGS),
        replicates=raw["replicates"], alpha=raw["alpha"], output_dir=args.results_dir,
    )
    result = ExperimentResult(dataset=raw["dataset"], config=cfg)
    for cell in raw["cells"]:
        key = (cell["embedding"], cell["algorithm"], cell["metric"])
        result.cells[key] = TaskResult(
            dataset=raw["dataset"], embedding=key[0], algorithm=key[1], metric=key[2],
            accuracies=np.array(cell["accuracies"]),
        )
    for f in raw["failures"]:
        result.failures[(f["embedding"], f["algorithm"], f["metric"])] = f["error"]
    for emb_name in cfg.embeddings:
        for algo in result.algorithms:
            per_metric = {
                m: result.cells[(emb_name, algo, m)]
                for m in cfg.metrics if (emb_name, algo, m) in result.cells
            }
            result.verdicts[(emb_name, algo)] = (
                verdict(per_metric, alpha=cfg.alpha)
                if set(per_metric) == set(METRIC_ORDER) else None
            )
    fmt = ("csv",) if args.format == "csv" else ("markdown",)
    for p in emit_tables(result, output_dir=args.results_dir, formats=fmt):
        print(f"wrote {p}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="uotbench",
                                     description="UOT metric benchmark harness")
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="run a full experiment from a config file")
    p_run.add_argument("config")
    p_run.set_defaults(func=_cmd_run)

    p_d = sub.add_parser("distances", help="compute one pairwise distance matrix")
    p_d.add_argument("dataset")
    p_d.add_argument("--metric", required=True, choices=ALL_METRICS)
    p_d.add_argument("--out", required=True)
    p_d.add_argument("--kappa", type=float, default=1.0)
    p_d.add_argument("--epsilon", type=float, default=None)
    p_d.add_argument("--tol", type=float, default=1e-9)
    p_d.add_argument("--workers", type=int, default=1)
    p_d.set_defaults(func=_cmd_distances)

    p_e = sub.add_parser("embed", help="embed a cached distance matrix")
    p_e.add_argument("cache")
    p_e.add_argument("--method", required=True, choices=ALL_EMBEDDINGS)
    p_e.add_argument("--dim", type=int, default=2)
    p_e.add_argument("--k", type=int, default=10)
    p_e.add_argument("--perplexity", type=float, default=30.0)
    p_e.add_argument("--iters", type=int, default=1000)
    p_e.add_argument("--seed", type=int, default=0)
    p_e.add_argument("--dataset", default="")
    p_e.add_argument("--out", required=True)
    p_e.set_defaults(func=_cmd_embed)

    p_r = sub.add_parser("report", help="re-render tables from results.json")
    p_r.add_argument("results_dir")
    p_r.add_argument("--format", choices=("csv", "markdown"), default="csv")
    p_r.set_defaults(func=_cmd_report)
    return parser


def main(argv=None) -> int:
    logging.basicConfig(level=logging.INFO, stream=sys.stderr,
                        format="%(levelname)s %(name)s: %(message)s")
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (UotBenchError, OSError, json.JSONDecodeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
