"""
Paired-run experiment harness.

Every study trains an unconstrained and a constrained model from the same
initial network, the same initial centroids and the same seed, so that with
an empty constraint set both runs are identical.
"""

import itertools
import logging
import multiprocessing
from typing import Optional

import msgspec
import numpy as np
import polars as pl

from constrained_clustering import settings
from constrained_clustering.cluster_core import init_centroids
from constrained_clustering.constraints.oracles import gen_difficulty, gen_pairwise, gen_triplets
from constrained_clustering.constraints.sets import ConstraintSet, PairwiseSet
from constrained_clustering.exceptions import ConfigError, DatasetError
from constrained_clustering.items import AggregateRecord, RunRecord, SizeRecord
from constrained_clustering.metrics import best_kmeans
from constrained_clustering.network import (
    ArchitectureSpec,
    ClusteringModel,
    NetworkParams,
    PretrainConfig,
    embed,
    pretrain_sdae,
)
from constrained_clustering.trainer import evaluate_model, predict, train
from constrained_clustering.utils.general import derive_seed, determine_run_hash

logger = logging.getLogger(__name__)

CONSTRAINT_KINDS = ("pairwise", "triplet")


class ExperimentReport(msgspec.Struct):
    study: str
    runs: list[RunRecord] = []
    aggregates: list[AggregateRecord] = []
    sizes: list[SizeRecord] = []
    negative_ratio: Optional[float] = None

    def records(self):
        yield from self.runs
        yield from self.aggregates
        yield from self.sizes


def prepare_shared_model(dataset, k, config, spec=None, pretrain_config=None):
    """
    Network and initial centroids shared by every run of a study.
    init_mode "sdae" pretrains the autoencoder, "raw" keeps it freshly initialized.
    """
    spec = spec or ArchitectureSpec(input_dim=dataset.dim)
    if config.init_mode == "sdae":
        pretrain_config = pretrain_config or PretrainConfig(seed=config.seed)
        params = pretrain_sdae(spec, dataset.X, pretrain_config)
    else:
        params = NetworkParams.initialize(spec, seed=config.seed)
    centroids = init_centroids(
        embed(params, dataset.X, config.eval_batch_size), k,
        restarts=config.kmeans_restarts, seed=config.seed,
    )
    return ClusteringModel(params=params, centroids=centroids.numpy())


def size_record(labels, k, label):
    counts = np.bincount(np.asarray(labels), minlength=k)
    expected = len(labels) / k
    return SizeRecord(
        label=label,
        counts=[int(count) for count in counts],
        expected=float(expected),
        max_deviation=float(np.max(np.abs(counts - expected))),
    )


def cluster_size_report(models, dataset):
    """Hard-assignment histogram and max deviation from n/k for each named model"""
    records = []
    for label, model in models.items():
        labels, _ = predict(model, dataset.X)
        records.append(size_record(labels, model.k, label))
        logger.info(f"{label}: cluster sizes {records[-1].counts}, max deviation {records[-1].max_deviation:.1f}")
    return records


def _run_record(study, result, seed, count, set_index, constrained, k, test_metrics=None):
    sizes = size_record(result.labels, k, study)
    return RunRecord(
        run_hash=determine_run_hash(seed, count, set_index, constrained),
        study=study,
        seed=int(seed),
        constraint_count=int(count),
        set_index=int(set_index),
        constrained=constrained,
        acc=None if result.metrics is None else result.metrics.acc,
        nmi=None if result.metrics is None else result.metrics.nmi,
        epochs_to_converge=result.epochs_run,
        occupied_clusters=int(np.count_nonzero(sizes.counts)),
        max_size_deviation=sizes.max_deviation,
        test_acc=None if test_metrics is None else test_metrics.acc,
        test_nmi=None if test_metrics is None else test_metrics.nmi,
    )


def _held_out_metrics(result, test_dataset, config):
    if test_dataset is None:
        return None
    _, metrics = evaluate_model(result.model, test_dataset, config.eval_batch_size)
    return metrics


def run_pair(study, dataset, constraints, model, config, seed, count, set_index, test_dataset=None):
    """
    Unconstrained and constrained runs sharing seed, network and centroids.
    Both trained models are also scored on test_dataset when one is given.
    """
    paired = config.replace(seed=int(seed))
    k = model.k
    baseline = train(dataset, None, model, paired, None)
    constrained = train(dataset, constraints, model, paired, None)
    baseline_test = _held_out_metrics(baseline, test_dataset, paired)
    constrained_test = _held_out_metrics(constrained, test_dataset, paired)
    logger.info(
        f"{study} count={count} set={set_index}: "
        f"acc {_fmt(baseline.metrics)} -> {_fmt(constrained.metrics)}"
        + ("" if test_dataset is None else f", test acc {_fmt(baseline_test)} -> {_fmt(constrained_test)}")
    )
    return (
        _run_record(study, baseline, seed, count, set_index, False, k, baseline_test),
        _run_record(study, constrained, seed, count, set_index, True, k, constrained_test),
    )


def _fmt(metrics):
    return "n/a" if metrics is None else f"{metrics.acc:.4f}"


def _run_tasks(tasks, workers):
    if workers > 1 and len(tasks) > 1:
        with multiprocessing.Pool(processes=workers) as pool:
            results = pool.starmap(run_pair, tasks)
    else:
        results = list(itertools.starmap(run_pair, tasks))
    return [record for pair in results for record in pair]


def aggregate_runs(study, runs):
    """Per (count, constrained) mean and population std, plus negative ratios"""
    if not runs:
        return [], None
    frame = pl.DataFrame([msgspec.structs.asdict(run) for run in runs])
    grouped = (
        frame.group_by(["constraint_count", "constrained"])
        .agg(
            pl.col("seed").count().alias("runs"),
            pl.col("acc").mean().alias("acc_mean"),
            pl.col("acc").std(ddof=0).alias("acc_std"),
            pl.col("nmi").mean().alias("nmi_mean"),
            pl.col("nmi").std(ddof=0).alias("nmi_std"),
            pl.col("epochs_to_converge").cast(pl.Float64).mean().alias("epochs_mean"),
            pl.col("test_acc").cast(pl.Float64).mean().alias("test_acc_mean"),
            pl.col("test_acc").cast(pl.Float64).std(ddof=0).alias("test_acc_std"),
            pl.col("test_nmi").cast(pl.Float64).mean().alias("test_nmi_mean"),
            pl.col("test_nmi").cast(pl.Float64).std(ddof=0).alias("test_nmi_std"),
        )
        .sort(["constraint_count", "constrained"])
    )

    pairs = (
        frame.filter(pl.col("constrained"))
        .select("constraint_count", "set_index", pl.col("acc").alias("acc_constrained"))
        .join(
            frame.filter(~pl.col("constrained")).select(
                "constraint_count", "set_index", pl.col("acc").alias("acc_baseline")
            ),
            on=["constraint_count", "set_index"],
        )
    )
    ratios = (
        pairs.group_by("constraint_count")
        .agg((pl.col("acc_constrained") < pl.col("acc_baseline")).cast(pl.Float64).mean().alias("negative_ratio"))
    )
    ratio_by_count = dict(zip(ratios["constraint_count"].to_list(), ratios["negative_ratio"].to_list()))

    aggregates = [
        AggregateRecord(
            study=study,
            constraint_count=row["constraint_count"],
            constrained=row["constrained"],
            runs=row["runs"],
            acc_mean=row["acc_mean"],
            acc_std=row["acc_std"],
            nmi_mean=row["nmi_mean"],
            nmi_std=row["nmi_std"],
            epochs_mean=row["epochs_mean"],
            negative_ratio=ratio_by_count.get(row["constraint_count"]) if row["constrained"] else None,
            test_acc_mean=row["test_acc_mean"],
            test_acc_std=row["test_acc_std"],
            test_nmi_mean=row["test_nmi_mean"],
            test_nmi_std=row["test_nmi_std"],
        )
        for row in grouped.iter_rows(named=True)
    ]
    overall = float(pairs.select(
        (pl.col("acc_constrained") < pl.col("acc_baseline")).cast(pl.Float64).mean()
    ).item()) if len(pairs) else None
    return aggregates, overall


def _require_labels(dataset):
    if not dataset.has_labels:
        raise DatasetError(f"{dataset.name}: experiments need ground-truth labels")


def _constraint_set(kind, dataset, count, seed, config, reference):
    if count == 0:
        return ConstraintSet()
    if kind == "pairwise":
        return ConstraintSet(pairwise=gen_pairwise(dataset.y, count, seed=seed))
    return ConstraintSet(
        triplets=gen_triplets(reference, count, seed=seed, margin=config.margin)
    )


def sweep_constraints(
    dataset,
    counts,
    sets_per_count,
    config,
    model,
    kind="pairwise",
    workers=settings.WORKERS,
    reference_embedding=None,
    study="sweep",
    test_dataset=None,
):
    """
    Paired constrained/unconstrained runs for `sets_per_count` generated
    constraint sets at each count. Triplet sets are drawn from
    `reference_embedding`, the shared model's embedding when omitted.
    With a test_dataset every run also records held-out Acc/NMI.
    """
    _require_labels(dataset)
    if kind not in CONSTRAINT_KINDS:
        raise ConfigError(f"constraint kind must be one of {CONSTRAINT_KINDS}, got {kind!r}")
    reference = reference_embedding
    if kind == "triplet" and reference is None:
        reference = embed(model.params, dataset.X, config.eval_batch_size)

    tasks = []
    for count in counts:
        for set_index in range(sets_per_count):
            seed = derive_seed(config.seed, count, set_index)
            constraints = _constraint_set(kind, dataset, count, seed, config, reference)
            tasks.append((study, dataset, constraints, model, config, seed, count, set_index, test_dataset))

    runs = _run_tasks(tasks, workers)
    aggregates, overall = aggregate_runs(study, runs)
    return ExperimentReport(study=study, runs=runs, aggregates=aggregates, negative_ratio=overall)


def negative_ratio_study(dataset, constraint_count, num_sets, config, model, workers=settings.WORKERS):
    """Fraction of constraint sets for which the constrained run scores a lower Acc"""
    report = sweep_constraints(
        dataset, [constraint_count], num_sets, config, model,
        workers=workers, study="negative_ratio",
    )
    logger.info(f"Negative ratio over {num_sets} sets of {constraint_count} constraints: {report.negative_ratio}")
    return report


def unbalanced_centroids(Z, k, seed=0, restarts=settings.KMEANS_RESTARTS):
    """k-means centroids with centroid 1 moved next to centroid 0"""
    centroids = best_kmeans(Z, k, restarts=restarts, seed=seed).centroids.copy()
    if k > 1:
        centroids[1] = centroids[0] + 0.05 * (centroids[1] - centroids[0])
    return centroids


def global_size_study(dataset, config, model, seeds=5):
    """Train from an unbalanced initialization with and without the global size loss"""
    _require_labels(dataset)
    k = model.k
    Z = embed(model.params, dataset.X, config.eval_batch_size)
    runs, sizes = [], []
    for index in range(seeds):
        seed = derive_seed(config.seed, index)
        start = ClusteringModel(params=model.params, centroids=unbalanced_centroids(Z, k, seed=seed))
        paired = config.replace(seed=seed)
        without = train(dataset, None, start, paired.replace(use_global=False))
        with_global = train(dataset, None, start, paired.replace(use_global=True))
        runs.append(_run_record("global_size", without, seed, 0, index, False, k))
        runs.append(_run_record("global_size", with_global, seed, 0, index, True, k))
        sizes.append(size_record(without.labels, k, f"seed{index}-without"))
        sizes.append(size_record(with_global.labels, k, f"seed{index}-with"))
        logger.info(
            f"Global size seed {index}: deviation {sizes[-2].max_deviation:.1f} -> {sizes[-1].max_deviation:.1f}"
        )
    aggregates, _ = aggregate_runs("global_size", runs)
    return ExperimentReport(study="global_size", runs=runs, aggregates=aggregates, sizes=sizes)


def trivial_solution_study(dataset, ml_count, config, model, epochs=settings.TRIVIAL_STUDY_EPOCHS):
    """
    Train on must-links only for `epochs` epochs, once with the reconstruction
    term and once without, and report how many clusters stay occupied in each.
    config.epochs is not used.
    """
    _require_labels(dataset)
    seed = derive_seed(config.seed, ml_count)
    generated = gen_pairwise(dataset.y, ml_count, seed=seed)
    constraints = ConstraintSet(pairwise=PairwiseSet(must_links=generated.must_links))
    base = config.replace(clustering_branch=False, epochs=epochs, delta_label_tol=0.0)

    runs = []
    for with_reconstruction in (False, True):
        result = train(dataset, constraints, model, base.replace(ml_with_reconstruction=with_reconstruction))
        record = _run_record("trivial_solution", result, seed, ml_count, 0, with_reconstruction, model.k)
        logger.info(
            f"Must-link only, reconstruction {'on' if with_reconstruction else 'off'}: "
            f"{record.occupied_clusters} of {model.k} clusters occupied"
        )
        runs.append(record)
    return ExperimentReport(study="trivial_solution", runs=runs)


def difficulty_study(dataset, config, model):
    """Paired runs without and with the instance difficulty loss"""
    _require_labels(dataset)
    difficulty = gen_difficulty(dataset.X, dataset.y, model.k, seed=config.seed, restarts=config.kmeans_restarts)
    constraints = ConstraintSet(difficulty=difficulty)
    if config.delta_label_tol == 0:
        config = config.replace(delta_label_tol=0.001)

    runs = []
    for enabled in (False, True):
        result = train(dataset, constraints, model, config.replace(use_difficulty=enabled))
        runs.append(_run_record("difficulty", result, config.seed, int(np.sum(difficulty.values < 0)), 0, enabled, model.k))
    aggregates, overall = aggregate_runs("difficulty", runs)
    return ExperimentReport(study="difficulty", runs=runs, aggregates=aggregates, negative_ratio=overall)
