import itertools
import logging

import msgspec
import numpy as np
from scipy.sparse import coo_matrix
from scipy.sparse.csgraph import connected_components

from constrained_clustering import settings
from constrained_clustering.exceptions import (
    ConstraintError,
    ConstraintInconsistencyError,
)

logger = logging.getLogger(__name__)

PAIR_KINDS = ("ml", "cl")


def canonical_pair(a, b):
    a, b = int(a), int(b)
    if a == b:
        raise ConstraintError(f"self pair ({a}, {b}) is not a constraint")
    if a < 0 or b < 0:
        raise ConstraintError(f"negative index in pair ({a}, {b})")
    return (a, b) if a < b else (b, a)


def _canonical_pairs(pairs):
    return tuple(sorted({canonical_pair(a, b) for a, b in pairs}))


def _pair_array(pairs):
    if not pairs:
        return np.zeros((0, 2), dtype=np.int64)
    return np.array(pairs, dtype=np.int64)


class PairwiseSet(msgspec.Struct, frozen=True):
    """Canonical (min index first), sorted and deduplicated must-link and cannot-link pairs"""

    must_links: tuple = ()
    cannot_links: tuple = ()

    def __post_init__(self):
        for a, b in itertools.chain(self.must_links, self.cannot_links):
            if a >= b or a < 0:
                raise ConstraintError(f"pair ({a}, {b}) is not canonical, build sets with PairwiseSet.build")
        overlap = set(self.must_links) & set(self.cannot_links)
        if overlap:
            raise ConstraintInconsistencyError(min(overlap))

    @classmethod
    def build(cls, must_links=(), cannot_links=()):
        return cls(
            must_links=_canonical_pairs(must_links),
            cannot_links=_canonical_pairs(cannot_links),
        )

    def __len__(self):
        return len(self.must_links) + len(self.cannot_links)

    @property
    def ml_array(self):
        return _pair_array(self.must_links)

    @property
    def cl_array(self):
        return _pair_array(self.cannot_links)

    def max_index(self):
        indices = [index for pair in itertools.chain(self.must_links, self.cannot_links) for index in pair]
        return max(indices) if indices else -1

    def with_pairs(self, kind, pairs):
        """A new set with extra pairs of one kind (not re-closed)"""
        if kind == "ml":
            return PairwiseSet.build(list(self.must_links) + list(pairs), self.cannot_links)
        if kind == "cl":
            return PairwiseSet.build(self.must_links, list(self.cannot_links) + list(pairs))
        raise ConstraintError(f"unknown pair kind {kind!r}")


class DifficultyVector(msgspec.Struct, frozen=True, eq=False):
    """Per-instance difficulty M in [-1, 1]: negative is difficult, positive is easy, 0 is unknown"""

    M: object

    def __post_init__(self):
        M = np.asarray(self.M, dtype=np.float64)
        if M.ndim != 1:
            raise ConstraintError(f"difficulty vector must be 1-D, got shape {M.shape}")
        if np.any(~np.isfinite(M)) or np.any(np.abs(M) > 1.0):
            raise ConstraintError("difficulty entries must lie in [-1, 1]")

    def __len__(self):
        return len(self.M)

    @property
    def values(self):
        return np.asarray(self.M, dtype=np.float64)


class TripletSet(msgspec.Struct, frozen=True):
    triples: tuple = ()
    margin: float = settings.TRIPLET_MARGIN

    def __post_init__(self):
        if not self.margin > 0:
            raise ConstraintError(f"triplet margin must be positive, got {self.margin}")
        for triple in self.triples:
            if len(triple) != 3 or len(set(triple)) != 3 or min(triple) < 0:
                raise ConstraintError(f"triplet {triple} needs three distinct non-negative indices")

    @classmethod
    def build(cls, triples, margin=settings.TRIPLET_MARGIN):
        return cls(triples=tuple(tuple(int(i) for i in triple) for triple in triples), margin=margin)

    def __len__(self):
        return len(self.triples)

    @property
    def array(self):
        if not self.triples:
            return np.zeros((0, 3), dtype=np.int64)
        return np.array(self.triples, dtype=np.int64)

    def max_index(self):
        return max((max(triple) for triple in self.triples), default=-1)


class CardinalitySpec(msgspec.Struct, frozen=True, eq=False):
    """
    Group-composition constraint over boolean masks of the full dataset.

    equality mode takes exactly two disjoint groups and balances their
    per-cluster mass; bounds mode takes one group and keeps its per-cluster
    mass within [lower, upper], given as dataset-level counts.
    """

    mode: str
    masks: dict
    lower: float = 0.0
    upper: float = 0.0

    def __post_init__(self):
        if self.mode == "equality":
            if len(self.masks) != 2:
                raise ConstraintError(f"equality mode needs exactly two groups, got {sorted(self.masks)}")
            first, second = (np.asarray(mask, dtype=bool) for mask in self.masks.values())
            if first.shape != second.shape:
                raise ConstraintError("group masks must cover the same instances")
            if np.any(first & second):
                raise ConstraintError(f"groups {sorted(self.masks)} overlap")
        elif self.mode == "bounds":
            if len(self.masks) != 1:
                raise ConstraintError(f"bounds mode needs exactly one group, got {sorted(self.masks)}")
            if self.lower > self.upper:
                raise ConstraintError(f"lower bound {self.lower} exceeds upper bound {self.upper}")
        else:
            raise ConstraintError(f"unknown cardinality mode {self.mode!r}")

    @property
    def dataset_size(self):
        return len(next(iter(self.masks.values())))

    def batch_masks(self, rows):
        return [np.asarray(mask, dtype=bool)[rows] for mask in self.masks.values()]


class HornRule(msgspec.Struct, frozen=True):
    """antecedents: ((kind, i, j), ...) all of which imply consequent (kind, i, j)"""

    antecedents: tuple
    consequent: tuple

    def __post_init__(self):
        if not self.antecedents:
            raise ConstraintError("horn rule needs at least one antecedent")
        for kind, i, j in (*self.antecedents, self.consequent):
            if kind not in PAIR_KINDS:
                raise ConstraintError(f"unknown predicate {kind!r} in horn rule")
            canonical_pair(i, j)

    @classmethod
    def build(cls, antecedents, consequent):
        return cls(
            antecedents=tuple((str(kind), int(i), int(j)) for kind, i, j in antecedents),
            consequent=(str(consequent[0]), int(consequent[1]), int(consequent[2])),
        )

    def max_index(self):
        return max(max(i, j) for _, i, j in (*self.antecedents, self.consequent))


class ConstraintSet(msgspec.Struct, frozen=True, eq=False):
    pairwise: PairwiseSet = msgspec.field(default_factory=PairwiseSet)
    triplets: TripletSet = msgspec.field(default_factory=TripletSet)
    difficulty: object = None
    cardinality: tuple = ()
    horn_rules: tuple = ()

    @property
    def is_empty(self):
        return (
            len(self.pairwise) == 0
            and len(self.triplets) == 0
            and self.difficulty is None
            and not self.cardinality
            and not self.horn_rules
        )

    def check_range(self, n):
        """Every referenced index must address one of n instances"""
        highest = max(
            self.pairwise.max_index(),
            self.triplets.max_index(),
            max((rule.max_index() for rule in self.horn_rules), default=-1),
        )
        if highest >= n:
            raise ConstraintError(f"constraint index {highest} out of range for {n} instances")
        if self.difficulty is not None and len(self.difficulty) != n:
            raise ConstraintError(f"difficulty vector has {len(self.difficulty)} entries for {n} instances")
        for spec in self.cardinality:
            if spec.dataset_size != n:
                raise ConstraintError(f"cardinality masks cover {spec.dataset_size} instances, dataset has {n}")

    def replace(self, **changes):
        return msgspec.structs.replace(self, **changes)


def closure_and_entailment(pairwise):
    """
    Expand must-links to cliques over their connected components and copy
    every cannot-link to all pairs across the two components it joins.

    Raises:
        ConstraintInconsistencyError: a cannot-link falls inside one component
    """
    nodes = sorted({index for pair in pairwise.must_links + pairwise.cannot_links for index in pair})
    if not nodes:
        return PairwiseSet()
    local = {node: position for position, node in enumerate(nodes)}

    ml = pairwise.ml_array
    rows = np.array([local[a] for a in ml[:, 0]], dtype=np.int64)
    cols = np.array([local[b] for b in ml[:, 1]], dtype=np.int64)
    graph = coo_matrix((np.ones(len(rows)), (rows, cols)), shape=(len(nodes), len(nodes)))
    _, component_of = connected_components(graph, directed=False)

    members = {}
    for node, component in zip(nodes, component_of):
        members.setdefault(int(component), []).append(node)

    must_links = set()
    for group in members.values():
        must_links.update(itertools.combinations(group, 2))

    cannot_links = set()
    for a, b in pairwise.cannot_links:
        component_a, component_b = component_of[local[a]], component_of[local[b]]
        if component_a == component_b:
            raise ConstraintInconsistencyError(
                (a, b),
                f"cannot-link ({a}, {b}) joins two must-linked instances",
            )
        for left in members[int(component_a)]:
            for right in members[int(component_b)]:
                cannot_links.add(canonical_pair(left, right))

    closed = PairwiseSet(
        must_links=tuple(sorted(must_links)),
        cannot_links=tuple(sorted(cannot_links)),
    )
    if len(closed) != len(pairwise):
        logger.debug(f"Closure grew {len(pairwise)} pairs to {len(closed)}")
    return closed
