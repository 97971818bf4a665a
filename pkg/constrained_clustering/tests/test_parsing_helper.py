import numpy as np
import pytest

from constrained_clustering.constraints import CardinalitySpec, ConstraintSet, DifficultyVector, HornRule, PairwiseSet, TripletSet
from constrained_clustering.exceptions import ConstraintFileError
from constrained_clustering.utils.classes import MustLink, Triplet
from constrained_clustering.utils.parsing_helper import (
    build_constraint_set,
    parse_constraint_lines,
    read_constraint_file,
    write_constraint_file,
)

LINES = [
    '{"type": "ml", "a": 3, "b": 1}',
    "",
    '{"type": "cl", "a": 0, "b": 2}',
    '{"type": "triplet", "a": 0, "p": 1, "n": 2}',
    '{"type": "difficulty", "i": 4, "m": -0.1}',
    '{"type": "horn", "ant": [["ml", 0, 1]], "cons": ["cl", 2, 3]}',
]

GROUP_LINES = [
    '{"type": "group", "name": "M", "members": [0, 1]}',
    '{"type": "group", "name": "F", "members": [2, 3]}',
    '{"type": "card_eq", "groups": ["M", "F"]}',
    '{"type": "card_bound", "group": "M", "L": 1, "U": 2}',
]


def test_parse_skips_blank_lines_and_keeps_line_numbers():
    records = parse_constraint_lines(LINES)
    assert [line_number for line_number, _ in records] == [1, 3, 4, 5, 6]
    assert records[0][1] == MustLink(a=3, b=1)
    assert records[2][1] == Triplet(a=0, p=1, n=2)


@pytest.mark.parametrize(
    "line",
    [
        '{"type": "quad", "a": 0}',
        '{"type": "ml", "a": 0}',
        '{"type": "ml", "a": "zero", "b": 1}',
        "not json",
    ],
)
def test_parse_errors_name_the_line(line):
    with pytest.raises(ConstraintFileError) as excinfo:
        parse_constraint_lines([LINES[0], line])
    assert excinfo.value.line_number == 2


def test_build_constraint_set():
    constraints = build_constraint_set(parse_constraint_lines(LINES))
    assert constraints.pairwise == PairwiseSet.build(must_links=[(1, 3)], cannot_links=[(0, 2)])
    assert constraints.triplets.triples == ((0, 1, 2),)
    np.testing.assert_allclose(constraints.difficulty.values, [0.0, 0.0, 0.0, 0.0, -0.1])
    assert constraints.horn_rules == (HornRule.build([("ml", 0, 1)], ("cl", 2, 3)),)
    constraints.check_range(5)


def test_build_groups_and_cardinality():
    constraints = build_constraint_set(parse_constraint_lines(GROUP_LINES), n=6)
    equality, bounds = constraints.cardinality
    assert equality.mode == "equality"
    assert equality.masks["M"].tolist() == [True, True, False, False, False, False]
    assert equality.masks["F"].tolist() == [False, False, True, True, False, False]
    assert (bounds.mode, bounds.lower, bounds.upper) == ("bounds", 1.0, 2.0)


@pytest.mark.parametrize(
    "lines, line_number",
    [
        (['{"type": "ml", "a": 2, "b": 2}'], 1),
        ([LINES[0], '{"type": "difficulty", "i": 0, "m": 1.5}'], 2),
        (GROUP_LINES[:1] + ['{"type": "card_eq", "groups": ["M", "X"]}'], 2),
        (GROUP_LINES[:1] + ['{"type": "card_bound", "group": "M", "L": 3, "U": 1}'], 2),
        (['{"type": "horn", "ant": [["triplet", 0, 1]], "cons": ["cl", 2, 3]}'], 1),
    ],
)
def test_build_errors_name_the_line(lines, line_number):
    with pytest.raises(ConstraintFileError) as excinfo:
        build_constraint_set(parse_constraint_lines(lines))
    assert excinfo.value.line_number == line_number


@pytest.mark.parametrize("member", [6, 40, -1])
def test_group_members_outside_the_dataset(member):
    lines = [
        GROUP_LINES[0],
        f'{{"type": "group", "name": "F", "members": [2, {member}]}}',
        GROUP_LINES[2],
    ]
    with pytest.raises(ConstraintFileError) as excinfo:
        build_constraint_set(parse_constraint_lines(lines), n=6)
    assert excinfo.value.line_number == 2
    assert str(member) in str(excinfo.value)


def test_constraint_file_round_trip(tmp_path):
    mask = np.array([True, False, True, False, False, False])
    constraints = ConstraintSet(
        pairwise=PairwiseSet.build(must_links=[(0, 1), (4, 5)], cannot_links=[(1, 2)]),
        triplets=TripletSet.build([(0, 1, 3), (5, 4, 2)]),
        difficulty=DifficultyVector(M=np.array([1.0, -0.1, 0.0, 0.0, 1.0, 0.0])),
        cardinality=(
            CardinalitySpec(mode="equality", masks={"M": mask, "F": ~mask}),
            CardinalitySpec(mode="bounds", masks={"M": mask}, lower=0.5, upper=1.5),
        ),
        horn_rules=(HornRule.build([("ml", 0, 1), ("cl", 1, 2)], ("cl", 0, 2)),),
    )
    path = tmp_path / "constraints.jsonl"
    assert write_constraint_file(constraints, path) == 3 + 2 + 3 + 2 + 2 + 1

    loaded = read_constraint_file(path, n=6)
    assert loaded.pairwise == constraints.pairwise
    assert loaded.triplets == constraints.triplets
    np.testing.assert_array_equal(loaded.difficulty.values, constraints.difficulty.values)
    assert loaded.horn_rules == constraints.horn_rules
    assert [spec.mode for spec in loaded.cardinality] == ["equality", "bounds"]
    for original, reread in zip(constraints.cardinality, loaded.cardinality):
        assert list(reread.masks) == list(original.masks)
        for name in original.masks:
            np.testing.assert_array_equal(reread.masks[name], original.masks[name])
        assert (reread.lower, reread.upper) == (original.lower, original.upper)
