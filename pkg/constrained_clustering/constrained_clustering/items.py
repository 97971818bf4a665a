# Record types written to history and report files
#
# Field order is the serialized order, keep it stable.

from typing import Optional

from msgspec import Struct


class EpochRecord(Struct):
    epoch: int
    clustering_loss: float
    reconstruction_loss: float
    difficulty_loss: float = 0.0
    global_size_loss: float = 0.0
    cardinality_loss: float = 0.0
    must_link_loss: float = 0.0
    cannot_link_loss: float = 0.0
    triplet_loss: float = 0.0
    churn: float = 0.0
    acc: Optional[float] = None
    nmi: Optional[float] = None
    active_must_links: int = 0
    active_cannot_links: int = 0

    @property
    def branch_one_loss(self):
        return (
            self.clustering_loss
            + self.reconstruction_loss
            + self.difficulty_loss
            + self.global_size_loss
            + self.cardinality_loss
        )


class RunRecord(Struct, tag="run"):
    run_hash: str
    study: str
    seed: int
    constraint_count: int
    set_index: int
    constrained: bool
    acc: Optional[float]
    nmi: Optional[float]
    epochs_to_converge: int
    occupied_clusters: int = 0
    max_size_deviation: float = 0.0
    test_acc: Optional[float] = None
    test_nmi: Optional[float] = None


class AggregateRecord(Struct, tag="aggregate"):
    study: str
    constraint_count: int
    constrained: bool
    runs: int
    acc_mean: Optional[float]
    acc_std: Optional[float]
    nmi_mean: Optional[float]
    nmi_std: Optional[float]
    epochs_mean: float
    negative_ratio: Optional[float] = None
    test_acc_mean: Optional[float] = None
    test_acc_std: Optional[float] = None
    test_nmi_mean: Optional[float] = None
    test_nmi_std: Optional[float] = None


class SizeRecord(Struct, tag="sizes"):
    label: str
    counts: list[int]
    expected: float
    max_deviation: float
