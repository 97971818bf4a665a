import numpy as np
import pytest

from constrained_clustering.datasets import Dataset, train_test_split
from constrained_clustering.experiments import (
    aggregate_runs,
    cluster_size_report,
    difficulty_study,
    global_size_study,
    negative_ratio_study,
    size_record,
    sweep_constraints,
    trivial_solution_study,
    unbalanced_centroids,
)
from constrained_clustering.exceptions import ConfigError, DatasetError
from constrained_clustering.items import RunRecord
from constrained_clustering.pipelines import write_report


def _run(set_index, constrained, acc, test_acc=None):
    return RunRecord(
        run_hash=f"h{set_index}{int(constrained)}",
        study="sweep",
        seed=set_index,
        constraint_count=10,
        set_index=set_index,
        constrained=constrained,
        acc=acc,
        nmi=acc / 2,
        epochs_to_converge=4,
        test_acc=test_acc,
        test_nmi=None if test_acc is None else test_acc / 2,
    )


def test_aggregate_runs_bookkeeping():
    runs = [_run(0, False, 0.8), _run(0, True, 0.9), _run(1, False, 0.8), _run(1, True, 0.6)]
    aggregates, overall = aggregate_runs("sweep", runs)
    baseline, constrained = aggregates

    assert (baseline.constrained, constrained.constrained) == (False, True)
    assert constrained.runs == 2
    assert constrained.acc_mean == pytest.approx(0.75)
    # population standard deviation
    assert constrained.acc_std == pytest.approx(0.15)
    assert constrained.nmi_std == pytest.approx(0.075)
    assert baseline.acc_std == pytest.approx(0.0)
    assert constrained.epochs_mean == 4.0
    assert constrained.negative_ratio == pytest.approx(0.5)
    assert baseline.negative_ratio is None
    assert overall == pytest.approx(0.5)
    assert constrained.test_acc_mean is None and constrained.test_nmi_std is None

    assert aggregate_runs("sweep", []) == ([], None)


def test_aggregate_runs_held_out_scores():
    runs = [_run(0, False, 0.8, 0.7), _run(0, True, 0.9, 0.9), _run(1, False, 0.8, 0.7), _run(1, True, 0.6, 0.5)]
    baseline, constrained = aggregate_runs("sweep", runs)[0]
    assert baseline.test_acc_mean == pytest.approx(0.7)
    assert baseline.test_acc_std == pytest.approx(0.0)
    assert constrained.test_acc_mean == pytest.approx(0.7)
    assert constrained.test_acc_std == pytest.approx(0.2)
    assert constrained.test_nmi_mean == pytest.approx(0.35)


def test_size_record():
    balanced = size_record([0, 1, 0, 1], 2, "balanced")
    assert (balanced.counts, balanced.expected, balanced.max_deviation) == ([2, 2], 2.0, 0.0)
    skewed = size_record([0, 0, 0, 0], 3, "skewed")
    assert skewed.counts == [4, 0, 0]
    assert skewed.max_deviation == pytest.approx(4 - 4 / 3)


def test_unbalanced_centroids_pull_second_centre_in(rng):
    Z = np.concatenate([rng.normal(0.0, 0.1, (30, 2)), rng.normal(5.0, 0.1, (30, 2))])
    centroids = unbalanced_centroids(Z, 2, seed=0, restarts=3)
    assert np.linalg.norm(centroids[1] - centroids[0]) < 0.05 * 8.0


def test_studies_need_labels(shared_model, train_config, blobs):
    unlabelled = Dataset(X=blobs.X)
    with pytest.raises(DatasetError):
        sweep_constraints(unlabelled, [0], 1, train_config, shared_model)
    with pytest.raises(ConfigError):
        sweep_constraints(blobs, [0], 1, train_config, shared_model, kind="quad")


def test_cluster_size_report(blobs, shared_model):
    (record,) = cluster_size_report({"shared": shared_model}, blobs)
    assert record.label == "shared"
    assert sum(record.counts) == blobs.n
    assert len(record.counts) == shared_model.k


@pytest.mark.slow
def test_sweep_with_no_constraints_gives_identical_pairs(blobs, shared_model, train_config):
    config = train_config.replace(epochs=2)
    report = sweep_constraints(blobs, [0], 2, config, shared_model)
    assert len(report.runs) == 4
    for baseline, constrained in zip(report.runs[::2], report.runs[1::2]):
        assert (baseline.constrained, constrained.constrained) == (False, True)
        assert baseline.acc == constrained.acc
        assert baseline.run_hash != constrained.run_hash
    assert report.negative_ratio == 0.0


@pytest.mark.slow
@pytest.mark.parametrize("kind", ["pairwise", "triplet"])
def test_reports_are_byte_identical_across_reruns(tmp_path, blobs, shared_model, train_config, kind):
    config = train_config.replace(epochs=2)
    paths = [tmp_path / "first.jsonl", tmp_path / "second.jsonl"]
    for path in paths:
        report = sweep_constraints(blobs, [20], 1, config, shared_model, kind=kind)
        assert write_report(report, path) == len(report.runs) + len(report.aggregates)
    assert paths[0].read_bytes() == paths[1].read_bytes()


@pytest.mark.slow
def test_trivial_solution_study_runs_its_own_epoch_count(blobs, shared_model, train_config):
    report = trivial_solution_study(blobs, 200, train_config.replace(delta_label_tol=0.5), shared_model, epochs=3)
    without, with_reconstruction = report.runs
    assert (without.constrained, with_reconstruction.constrained) == (False, True)
    assert [run.epochs_to_converge for run in report.runs] == [3, 3]
    assert all(1 <= run.occupied_clusters <= shared_model.k for run in report.runs)


@pytest.mark.slow
def test_sweep_scores_held_out_rows(blobs, shared_model, train_config):
    fit, held_out = train_test_split(blobs, 0.25, seed=1)
    config = train_config.replace(epochs=2)
    report = sweep_constraints(fit, [0, 20], 1, config, shared_model, test_dataset=held_out)

    assert all(0.0 <= run.test_acc <= 1.0 and run.test_nmi is not None for run in report.runs)
    baseline, constrained = report.runs[:2]
    assert baseline.test_acc == constrained.test_acc
    for aggregate in report.aggregates:
        matching = [
            run.test_acc
            for run in report.runs
            if (run.constraint_count, run.constrained) == (aggregate.constraint_count, aggregate.constrained)
        ]
        assert aggregate.test_acc_mean == pytest.approx(np.mean(matching))

    assert all(run.test_acc is None for run in sweep_constraints(fit, [0], 1, config, shared_model).runs)


@pytest.mark.slow
def test_global_size_study_reports_sizes(blobs, shared_model, train_config):
    report = global_size_study(blobs, train_config.replace(epochs=2), shared_model, seeds=1)
    assert [record.label for record in report.sizes] == ["seed0-without", "seed0-with"]
    assert all(sum(record.counts) == blobs.n for record in report.sizes)
    assert len(report.runs) == 2 and len(report.aggregates) == 2


@pytest.mark.slow
def test_difficulty_study_pairs_runs(blobs, shared_model, train_config):
    report = difficulty_study(blobs, train_config.replace(epochs=2), shared_model)
    without, with_difficulty = report.runs
    assert (without.constrained, with_difficulty.constrained) == (False, True)
    assert without.constraint_count == with_difficulty.constraint_count
    assert report.negative_ratio in (0.0, 1.0)


@pytest.mark.slow
@pytest.mark.acceptance
def test_pairwise_constraints_help_on_average(reference_blobs, reference_model, reference_config):
    report = sweep_constraints(reference_blobs, [200], 5, reference_config, reference_model, workers=4)
    baseline, constrained = report.aggregates
    assert baseline.acc_mean >= 0.95
    assert constrained.acc_mean >= baseline.acc_mean


@pytest.mark.slow
@pytest.mark.acceptance
def test_constraints_rarely_hurt(reference_blobs, reference_model, reference_config):
    report = negative_ratio_study(reference_blobs, 200, 20, reference_config, reference_model, workers=4)
    assert len(report.runs) == 40
    assert report.negative_ratio <= 0.10


@pytest.mark.slow
@pytest.mark.acceptance
def test_accuracy_grows_with_constraint_count(reference_blobs, reference_model, reference_config):
    counts = [0, 50, 200, 800]
    report = sweep_constraints(reference_blobs, counts, 3, reference_config, reference_model, workers=4)
    means = [aggregate.acc_mean for aggregate in report.aggregates if aggregate.constrained]
    assert [aggregate.constraint_count for aggregate in report.aggregates if aggregate.constrained] == counts
    for lower, higher in zip(means, means[1:]):
        assert higher >= lower - 0.02


@pytest.mark.slow
@pytest.mark.acceptance
def test_must_links_alone_collapse_without_reconstruction(reference_blobs, reference_model, reference_config):
    report = trivial_solution_study(reference_blobs, 1000, reference_config, reference_model)
    without, with_reconstruction = report.runs
    assert without.occupied_clusters <= 2
    assert with_reconstruction.occupied_clusters >= reference_model.k - 1


@pytest.mark.slow
@pytest.mark.acceptance
def test_global_size_loss_evens_out_cluster_sizes(reference_blobs, reference_model, reference_config):
    report = global_size_study(reference_blobs, reference_config, reference_model, seeds=5)
    assert len(report.sizes) == 10
    for without, with_global in zip(report.sizes[::2], report.sizes[1::2]):
        assert with_global.max_deviation <= without.max_deviation
