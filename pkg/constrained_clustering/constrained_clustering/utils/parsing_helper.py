import logging
from pathlib import Path

import msgspec
import numpy as np

from constrained_clustering import settings
from constrained_clustering.constraints.sets import (
    CardinalitySpec,
    ConstraintSet,
    DifficultyVector,
    HornRule,
    PairwiseSet,
    TripletSet,
    canonical_pair,
)
from constrained_clustering.exceptions import ConstraintError, ConstraintFileError
from constrained_clustering.utils.classes import (
    CannotLink,
    CardinalityBound,
    CardinalityEquality,
    ConstraintRecord,
    Difficulty,
    Group,
    Horn,
    MustLink,
    Triplet,
)

logger = logging.getLogger(__name__)

decoder = msgspec.json.Decoder(ConstraintRecord)
encoder = msgspec.json.Encoder()


def parse_constraint_lines(lines):
    """Decode (line_number, record) pairs, skipping blank lines"""
    records = []
    for line_number, line in enumerate(lines, start=1):
        if not line.strip():
            continue
        try:
            records.append((line_number, decoder.decode(line)))
        except (msgspec.ValidationError, msgspec.DecodeError) as exc:
            raise ConstraintFileError(line_number, str(exc)) from None
    return records


def _masks(names, groups, n, line_number):
    masks = {}
    for name in names:
        if name not in groups:
            raise ConstraintFileError(line_number, f"unknown group {name!r}")
        mask = np.zeros(n, dtype=bool)
        mask[groups[name]] = True
        masks[name] = mask
    return masks


def _highest_index(record):
    if isinstance(record, (MustLink, CannotLink)):
        return max(record.a, record.b)
    if isinstance(record, Triplet):
        return max(record.a, record.p, record.n)
    if isinstance(record, Difficulty):
        return record.i
    if isinstance(record, Group):
        return max(record.members, default=-1)
    if isinstance(record, Horn):
        return max(max(i, j) for _, i, j in (*record.ant, record.cons))
    return -1


def build_constraint_set(records, n=None, margin=settings.TRIPLET_MARGIN):
    """
    Assemble decoded records into a ConstraintSet over n instances
    (inferred from the largest index when n is None).
    """
    if n is None:
        n = max((_highest_index(record) for _, record in records), default=-1) + 1

    must_links, cannot_links, triples, horn_rules = [], [], [], []
    difficulty = None
    groups = {}
    cardinality_records = []

    for line_number, record in records:
        try:
            if isinstance(record, MustLink):
                must_links.append(canonical_pair(record.a, record.b))
            elif isinstance(record, CannotLink):
                cannot_links.append(canonical_pair(record.a, record.b))
            elif isinstance(record, Triplet):
                triples.append((record.a, record.p, record.n))
            elif isinstance(record, Difficulty):
                if difficulty is None:
                    difficulty = np.zeros(n)
                if not 0 <= record.i < n:
                    raise ConstraintError(f"difficulty index {record.i} out of range")
                if abs(record.m) > 1.0:
                    raise ConstraintError(f"difficulty {record.m} outside [-1, 1]")
                difficulty[record.i] = record.m
            elif isinstance(record, Group):
                outside = [member for member in record.members if not 0 <= member < n]
                if outside:
                    raise ConstraintError(f"group {record.name!r} member {outside[0]} outside [0, {n})")
                groups[record.name] = list(record.members)
            elif isinstance(record, (CardinalityEquality, CardinalityBound)):
                cardinality_records.append((line_number, record))
            elif isinstance(record, Horn):
                horn_rules.append(HornRule.build(record.ant, record.cons))
        except ConstraintError as exc:
            raise ConstraintFileError(line_number, str(exc)) from None

    cardinality = []
    for line_number, record in cardinality_records:
        try:
            if isinstance(record, CardinalityEquality):
                cardinality.append(
                    CardinalitySpec(mode="equality", masks=_masks(record.groups, groups, n, line_number))
                )
            else:
                cardinality.append(
                    CardinalitySpec(
                        mode="bounds",
                        masks=_masks([record.group], groups, n, line_number),
                        lower=record.lower,
                        upper=record.upper,
                    )
                )
        except ConstraintFileError:
            raise
        except ConstraintError as exc:
            raise ConstraintFileError(line_number, str(exc)) from None

    return ConstraintSet(
        pairwise=PairwiseSet.build(must_links, cannot_links),
        triplets=TripletSet.build(triples, margin=margin),
        difficulty=None if difficulty is None else DifficultyVector(M=difficulty),
        cardinality=tuple(cardinality),
        horn_rules=tuple(horn_rules),
    )


def read_constraint_file(path, n=None, margin=settings.TRIPLET_MARGIN):
    with open(path) as f:
        records = parse_constraint_lines(f)
    constraints = build_constraint_set(records, n=n, margin=margin)
    logger.info(
        f"Read {len(constraints.pairwise.must_links)} ML, {len(constraints.pairwise.cannot_links)} CL, "
        f"{len(constraints.triplets)} triplets and {len(constraints.horn_rules)} horn rules from {path}"
    )
    return constraints


def constraint_records(constraints):
    """Records for a ConstraintSet in file order; difficulty keeps non-zero entries only"""
    records = [MustLink(a=a, b=b) for a, b in constraints.pairwise.must_links]
    records += [CannotLink(a=a, b=b) for a, b in constraints.pairwise.cannot_links]
    records += [Triplet(a=a, p=p, n=n) for a, p, n in constraints.triplets.triples]
    if constraints.difficulty is not None:
        records += [
            Difficulty(i=int(i), m=float(m))
            for i, m in enumerate(constraints.difficulty.values)
            if m != 0
        ]

    written = set()
    for spec in constraints.cardinality:
        for name, mask in spec.masks.items():
            if name not in written:
                records.append(Group(name=name, members=np.flatnonzero(mask).tolist()))
                written.add(name)
        if spec.mode == "equality":
            records.append(CardinalityEquality(groups=list(spec.masks)))
        else:
            records.append(CardinalityBound(group=next(iter(spec.masks)), lower=spec.lower, upper=spec.upper))

    records += [
        Horn(ant=[tuple(antecedent) for antecedent in rule.antecedents], cons=tuple(rule.consequent))
        for rule in constraints.horn_rules
    ]
    return records


def write_constraint_file(constraints, path):
    records = constraint_records(constraints)
    Path(path).write_bytes(b"".join(encoder.encode(record) + b"\n" for record in records))
    logger.info(f"Wrote {len(records)} constraint records to {path}")
    return len(records)
