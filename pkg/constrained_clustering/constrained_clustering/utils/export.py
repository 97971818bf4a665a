import logging

import msgspec
import numpy as np
import polars as pl

logger = logging.getLogger(__name__)


def embedding_frame(Z, labels=None):
    Z = np.asarray(Z)
    frame = pl.DataFrame({f"z{j}": Z[:, j] for j in range(Z.shape[1])})
    if labels is not None:
        frame = frame.with_columns(pl.Series("label", np.asarray(labels)))
    return frame


def export_embedding(Z, path, labels=None):
    """n x embedding matrix as delimited text, one row per instance"""
    embedding_frame(Z, labels).write_csv(path)
    logger.info(f"Wrote {len(Z)} embedded rows to {path}")


def history_frame(history):
    return pl.DataFrame([msgspec.structs.asdict(record) for record in history])


def export_history(history, path):
    history_frame(history).write_csv(path)


def size_frame(size_records):
    return pl.DataFrame(
        [
            {"label": record.label, "cluster": cluster, "count": count, "expected": record.expected}
            for record in size_records
            for cluster, count in enumerate(record.counts)
        ]
    )


def export_sizes(size_records, path):
    size_frame(size_records).write_csv(path)
    logger.info(f"Wrote cluster size table for {len(size_records)} models to {path}")


def export_predictions(labels, path):
    pl.DataFrame({"label": np.asarray(labels)}).write_csv(path, include_header=False)
