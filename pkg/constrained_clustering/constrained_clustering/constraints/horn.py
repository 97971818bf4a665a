import logging

from constrained_clustering.cluster_core import hard_assign
from constrained_clustering.constraints.sets import canonical_pair, closure_and_entailment

logger = logging.getLogger(__name__)


def _holds(kind, i, j, labels):
    same = labels[i] == labels[j]
    return same if kind == "ml" else not same


def evaluate_horn_rules(rules, Q):
    """
    Consequents of the rules whose antecedents all hold under the hard
    assignment of Q. An ML predicate holds when both instances share an
    argmax cluster, a CL predicate when they do not.
    """
    labels = hard_assign(Q)
    return [
        rule.consequent
        for rule in rules
        if all(_holds(kind, i, j, labels) for kind, i, j in rule.antecedents)
    ]


def activate_rules(rules, Q, pairwise, activated=frozenset()):
    """
    Inject the consequents of newly satisfied rules into `pairwise`.

    Rules listed in `activated` (by position) stay active and are not
    re-evaluated. The grown set is passed through closure_and_entailment,
    so a consequent that contradicts it raises ConstraintInconsistencyError.

    Returns:
        (pairwise set, frozenset of activated rule positions)
    """
    labels = hard_assign(Q)
    fresh = {}
    for position, rule in enumerate(rules):
        if position in activated:
            continue
        if all(_holds(kind, i, j, labels) for kind, i, j in rule.antecedents):
            fresh[position] = rule.consequent
    if not fresh:
        return pairwise, frozenset(activated)

    grown = pairwise
    for position, (kind, i, j) in fresh.items():
        logger.info(f"Horn rule {position} activated, adding {kind.upper()}{canonical_pair(i, j)}")
        grown = grown.with_pairs(kind, [(i, j)])
    return closure_and_entailment(grown), frozenset(activated) | frozenset(fresh)
