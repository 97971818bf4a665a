from typing import Union

from msgspec import Struct


class MustLink(Struct, tag="ml"):
    a: int
    b: int


class CannotLink(Struct, tag="cl"):
    a: int
    b: int


class Triplet(Struct, tag="triplet"):
    a: int
    p: int
    n: int


class Difficulty(Struct, tag="difficulty"):
    i: int
    m: float


class Group(Struct, tag="group"):
    name: str
    members: list[int]


class CardinalityEquality(Struct, tag="card_eq"):
    groups: list[str]


class CardinalityBound(Struct, tag="card_bound", rename={"lower": "L", "upper": "U"}):
    group: str
    lower: float
    upper: float


class Horn(Struct, tag="horn"):
    ant: list[tuple[str, int, int]]
    cons: tuple[str, int, int]


ConstraintRecord = Union[
    MustLink,
    CannotLink,
    Triplet,
    Difficulty,
    Group,
    CardinalityEquality,
    CardinalityBound,
    Horn,
]
