import msgspec
import numpy as np
import polars as pl

from constrained_clustering.experiments import ExperimentReport
from constrained_clustering.items import EpochRecord, SizeRecord
from constrained_clustering.pipelines import ReportPipeline, write_history, write_report
from constrained_clustering.utils.export import (
    embedding_frame,
    export_history,
    export_predictions,
    export_sizes,
    size_frame,
)
from constrained_clustering.utils.general import determine_run_hash, get_batch_chunks

HISTORY = [
    EpochRecord(epoch=1, clustering_loss=0.5, reconstruction_loss=0.25, acc=0.5, nmi=0.25),
    EpochRecord(epoch=2, clustering_loss=0.25, reconstruction_loss=0.125, must_link_loss=1.5),
]


def test_history_is_one_json_object_per_line(tmp_path):
    path = tmp_path / "reports" / "history.jsonl"
    assert write_history(HISTORY, path) == 2
    lines = path.read_bytes().splitlines()
    assert [msgspec.json.decode(line, type=EpochRecord) for line in lines] == HISTORY
    assert HISTORY[0].branch_one_loss == 0.75


def test_report_records_are_tagged(tmp_path):
    report = ExperimentReport(
        study="sizes",
        sizes=[SizeRecord(label="a", counts=[3, 1], expected=2.0, max_deviation=1.0)],
    )
    path = tmp_path / "report.jsonl"
    assert write_report(report, path) == 1
    assert msgspec.json.decode(path.read_bytes().strip())["type"] == "sizes"


def test_pipeline_rewrites_file_on_open(tmp_path):
    path = tmp_path / "report.jsonl"
    path.write_text("stale\n")
    with ReportPipeline(path) as pipeline:
        pipeline.process_record(HISTORY[0])
    assert b"stale" not in path.read_bytes()


def test_exports(tmp_path):
    Z = np.arange(6.0).reshape(3, 2)
    frame = embedding_frame(Z, labels=[1, 0, 1])
    assert frame.columns == ["z0", "z1", "label"]

    export_history(HISTORY, tmp_path / "history.csv")
    assert pl.read_csv(tmp_path / "history.csv")["epoch"].to_list() == [1, 2]

    records = [SizeRecord(label="a", counts=[3, 1], expected=2.0, max_deviation=1.0)]
    assert size_frame(records)["count"].to_list() == [3, 1]
    export_sizes(records, tmp_path / "sizes.csv")
    assert pl.read_csv(tmp_path / "sizes.csv").height == 2

    export_predictions([2, 0, 1], tmp_path / "predictions.csv")
    assert (tmp_path / "predictions.csv").read_text().split() == ["2", "0", "1"]


def test_batch_chunks_and_run_hashes():
    chunks = get_batch_chunks(np.arange(7), 3)
    assert [chunk.tolist() for chunk in chunks] == [[0, 1, 2], [3, 4, 5], [6]]
    assert get_batch_chunks([], 3) == []
    assert determine_run_hash(0, 50, 1, True) == determine_run_hash(0, 50, 1, True)
    assert determine_run_hash(0, 50, 1, True) != determine_run_hash(0, 50, 1, False)
