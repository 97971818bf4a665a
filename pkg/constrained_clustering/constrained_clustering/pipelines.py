# Report pipelines
#
# A pipeline is opened once per command, receives every record the command
# produces and is closed at the end. Records are msgspec Structs and are
# written one JSON object per line, in the order they arrive.

import logging
from pathlib import Path

import msgspec

logger = logging.getLogger(__name__)


class ReportPipeline:
    def __init__(self, path):
        self.path = Path(path)
        self.encoder = msgspec.json.Encoder()
        self.file = None
        self.records_written = 0

    def open(self):
        ## Reports are rewritten from scratch so reruns stay byte-identical
        self.path.parent.mkdir(parents=True, exist_ok=True)
        self.file = open(self.path, "wb")
        return self

    def process_record(self, record):
        self.file.write(self.encoder.encode(record) + b"\n")
        self.records_written += 1
        return record

    def close(self):
        if self.file is not None:
            self.file.close()
            self.file = None
        logger.info(f"Wrote {self.records_written} records to {self.path}")

    def __enter__(self):
        return self.open()

    def __exit__(self, *exc_info):
        self.close()


def write_report(report, path):
    with ReportPipeline(path) as pipeline:
        for record in report.records():
            pipeline.process_record(record)
    return pipeline.records_written


def write_history(history, path):
    with ReportPipeline(path) as pipeline:
        for record in history:
            pipeline.process_record(record)
    return pipeline.records_written
