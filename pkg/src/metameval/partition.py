"""Extraction of independent human evaluators from a shared rater pool.

Given which raters annotated which segment, find ``k`` disjoint rater groups
and the largest set of segments such that every kept segment was annotated
by exactly one rater of each group.

Raters may be left out of every group unless ``total=True``. Among equally
good answers the one with the lexicographically smallest canonical label
vector wins: raters in sorted order, groups numbered by their smallest
member, unassigned raters labelled after all groups. Both solvers below use
that rule, so they return identical solutions, not just equal objectives.

Reference ILP model (for cross-checking with an off-the-shelf solver)::

    max   sum_s y_s
    s.t.  y_s <= sum_{r in cover(s)} x_{r,g}                      for all s, g
          sum_{r in cover(s)} x_{r,g} <= 1 + (|cover(s)|-1)(1-y_s) for all s, g
          sum_g x_{r,g} <= 1        (== 1 with total=True)        for all r
          sum_r x_{r,g} >= 1                                      for all g
          x, y binary
"""

from __future__ import annotations

import itertools
import logging
import warnings
from typing import Iterable, Sequence

import numpy as np

from .core import AnnotatedDataset, PartitionSolution, RaterAssignment

log = logging.getLogger(__name__)

BRUTE_FORCE_MAX_RATERS = 12


class PartitionSizeError(ValueError):
    pass


class EmptyRestrictionWarning(UserWarning):
    pass


def coverage(groups: Sequence[Iterable[str]], assignment: RaterAssignment) -> set[str]:
    """Segments whose cover meets every group in exactly one rater."""
    groups = [frozenset(g) for g in groups]
    for a, b in itertools.combinations(groups, 2):
        if a & b:
            raise ValueError(f"groups overlap on {sorted(a & b)}")
    return {
        seg
        for seg, cover in assignment.covers.items()
        if all(len(cover & g) == 1 for g in groups)
    }


def _check_k(k: int, n_raters: int) -> None:
    if k < 1:
        raise ValueError(f"k must be >= 1, got {k}")
    if k > n_raters:
        raise ValueError(f"k={k} exceeds the number of raters ({n_raters})")


def _cover_matrix(assignment: RaterAssignment, raters: Sequence[str]) -> tuple[list[str], np.ndarray]:
    index = {r: i for i, r in enumerate(raters)}
    segments = sorted(assignment.covers)
    covers = np.zeros((len(segments), len(raters)), dtype=np.int8)
    for s, seg in enumerate(segments):
        for r in assignment.covers[seg]:
            covers[s, index[r]] = 1
    return segments, covers


def _solution(labels: Sequence[int], raters: Sequence[str], k: int,
              assignment: RaterAssignment) -> PartitionSolution:
    groups = tuple(frozenset(r for r, lab in zip(raters, labels) if lab == g) for g in range(k))
    return PartitionSolution(groups=groups, retained_segments=frozenset(coverage(groups, assignment)))


def brute_force_partition(assignment: RaterAssignment, k: int, total: bool = False) -> PartitionSolution:
    """Exhaustive search over every labelling of the raters.

    Refuses instances with more than BRUTE_FORCE_MAX_RATERS raters.
    """
    raters = sorted(assignment.raters)
    n = len(raters)
    _check_k(k, n)
    if n > BRUTE_FORCE_MAX_RATERS:
        raise PartitionSizeError(f"{n} raters exceed the brute-force limit of {BRUTE_FORCE_MAX_RATERS}")
    _, covers = _cover_matrix(assignment, raters)
    n_labels = k if total else k + 1

    # enumerate a prefix in Python, the remaining raters as one numpy block
    tail = min(n, 8)
    block = np.array(list(itertools.product(range(n_labels), repeat=tail)), dtype=np.int8)
    best_obj, best_rows = -1, []
    for prefix in itertools.product(range(n_labels), repeat=n - tail):
        labels = np.hstack([np.broadcast_to(np.array(prefix, dtype=np.int8), (len(block), n - tail)), block])
        ok = np.ones(len(labels), dtype=bool)
        retained = np.ones((len(labels), covers.shape[0]), dtype=bool)
        first = []
        for g in range(k):
            member = labels == g
            ok &= member.any(axis=1)
            first.append(member.argmax(axis=1))
            retained &= (member.astype(np.int32) @ covers.T.astype(np.int32)) == 1
        # canonical numbering only: groups ordered by their first rater
        for g in range(1, k):
            ok &= first[g - 1] < first[g]
        if not ok.any():
            continue
        obj = np.where(ok, retained.sum(axis=1), -1)
        top = obj.max()
        if top > best_obj:
            best_obj, best_rows = top, [labels[obj == top]]
        elif top == best_obj:
            best_rows.append(labels[obj == top])
    rows = np.vstack(best_rows)
    # np.lexsort sorts by its last key first
    winner = rows[np.lexsort(rows.T[::-1])[0]]
    return _solution(winner.tolist(), raters, k, assignment)


def solve_partition(assignment: RaterAssignment, k: int, total: bool = False) -> PartitionSolution:
    """Exact branch-and-bound over rater-to-group assignments.

    Raters are labelled in sorted order; a rater may join an open group, open
    the next group, or (unless ``total``) stay unassigned. The bound at each
    node counts segments that can still end up with exactly one rater per
    group. Leaves are reached in increasing label-vector order, so pruning
    ties keeps the canonical optimum.
    """
    raters = sorted(assignment.raters)
    n = len(raters)
    _check_k(k, n)
    segments, covers = _cover_matrix(assignment, raters)

    # segments with identical covers behave identically
    uniq, weight = np.unique(covers, axis=0, return_counts=True) if len(segments) else (
        np.zeros((0, n), dtype=np.int8), np.zeros(0, dtype=np.int64))
    uniq = uniq.astype(np.int32)
    counts = np.zeros((len(uniq), k), dtype=np.int32)
    remaining = uniq.sum(axis=1)
    labels = [0] * n
    best = {"obj": -1, "labels": None}
    nodes = 0

    def bound() -> int:
        over = (counts > 1).any(axis=1)
        zeros = (counts == 0).sum(axis=1)
        alive = ~over & ((zeros == remaining) if total else (zeros <= remaining))
        return int(weight[alive].sum())

    def visit(i: int, opened: int) -> None:
        nonlocal nodes
        nodes += 1
        if k - opened > n - i:
            return
        ub = bound()
        if ub <= best["obj"]:
            return
        if i == n:
            best["obj"], best["labels"] = ub, list(labels)
            return
        col = uniq[:, i]
        remaining[:] -= col
        choices = list(range(min(opened + 1, k)))
        if not total:
            choices.append(k)
        for g in choices:
            labels[i] = g
            if g < k:
                counts[:, g] += col
            visit(i + 1, max(opened, g + 1) if g < k else opened)
            if g < k:
                counts[:, g] -= col
        remaining[:] += col

    visit(0, 0)
    log.debug("partition search visited %d nodes, objective %d", nodes, best["obj"])
    return _solution(best["labels"], raters, k, assignment)


def restrict_dataset(
    dataset: AnnotatedDataset,
    solution: PartitionSolution | None = None,
    extra_evaluators: Iterable[str] = (),
) -> AnnotatedDataset:
    """Keep the segments usable by every evaluator under comparison.

    A segment survives if it was retained by ``solution`` (when given) and
    every evaluator in ``extra_evaluators`` scored it for all systems. An
    empty result triggers an EmptyRestrictionWarning rather than an error.
    """
    keep = set(dataset.segments)
    if solution is not None:
        keep &= solution.retained_segments
    for ev in extra_evaluators:
        keep &= dataset.fully_covered_segments(ev)
    if not keep:
        warnings.warn(
            f"restriction of {dataset.testset_id or 'dataset'} left no segments",
            EmptyRestrictionWarning,
            stacklevel=2,
        )
    return dataset.with_segments(keep)
