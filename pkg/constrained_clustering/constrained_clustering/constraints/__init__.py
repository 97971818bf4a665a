from constrained_clustering.constraints.horn import activate_rules, evaluate_horn_rules
from constrained_clustering.constraints.losses import (
    assignment_similarity,
    cannot_link_loss,
    cardinality_bound_loss,
    cardinality_equality_loss,
    global_size_loss,
    instance_difficulty_loss,
    must_link_loss,
    triplet_loss,
)
from constrained_clustering.constraints.sets import (
    CardinalitySpec,
    ConstraintSet,
    DifficultyVector,
    HornRule,
    PairwiseSet,
    TripletSet,
    closure_and_entailment,
)

__all__ = [
    "CardinalitySpec",
    "ConstraintSet",
    "DifficultyVector",
    "HornRule",
    "PairwiseSet",
    "TripletSet",
    "activate_rules",
    "assignment_similarity",
    "cannot_link_loss",
    "cardinality_bound_loss",
    "cardinality_equality_loss",
    "closure_and_entailment",
    "evaluate_horn_rules",
    "global_size_loss",
    "instance_difficulty_loss",
    "must_link_loss",
    "triplet_loss",
]
