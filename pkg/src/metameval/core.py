"""Shared data model: test sets, evaluators, score tables and rater assignments.

Scores are stored oriented higher-is-better. Every numeric routine in the
package relies on that.
"""

from __future__ import annotations

import math
from collections import Counter
from dataclasses import dataclass, field
from functools import cached_property
from typing import Iterable, Mapping, Sequence

import numpy as np


class MetaEvalError(Exception):
    """Base class for data and validation failures."""


class ParseError(MetaEvalError, ValueError):
    def __init__(self, message: str, line: int | None = None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class CoverageError(MetaEvalError, ValueError):
    pass


class ConfigurationError(MetaEvalError, ValueError):
    pass


class ValidationError(MetaEvalError, ValueError):
    pass


class PartitionConsistencyError(MetaEvalError, ValueError):
    pass


class UndefinedResultError(MetaEvalError, ArithmeticError):
    pass


@dataclass(frozen=True)
class ScoreTable:
    """One evaluator's segment-level scores.

    ``rows`` keeps the (system, segment, score) triples in insertion order so
    that duplicates survive construction and can be reported by
    :func:`validate_dataset`; lookups go through :attr:`scores`.
    """

    evaluator_id: str
    rows: tuple[tuple[str, str, float], ...] = ()

    @classmethod
    def from_mapping(cls, evaluator_id: str, entries: Mapping[tuple[str, str], float]) -> "ScoreTable":
        rows = tuple((sys, seg, float(v)) for (sys, seg), v in entries.items())
        return cls(evaluator_id, rows)

    @cached_property
    def scores(self) -> dict[tuple[str, str], float]:
        return {(sys, seg): v for sys, seg, v in self.rows}

    @property
    def coverage(self) -> frozenset[tuple[str, str]]:
        return frozenset(self.scores)

    def __len__(self) -> int:
        return len(self.scores)

    def get(self, system: str, segment: str) -> float | None:
        return self.scores.get((system, segment))

    def covers_segment(self, segment: str, systems: Iterable[str]) -> bool:
        return all((sys, segment) in self.scores for sys in systems)

    def matrix(self, systems: Sequence[str], segments: Sequence[str]) -> np.ndarray:
        """Scores as a ``(len(systems), len(segments))`` float array.

        Raises CoverageError on the first missing (system, segment) pair.
        """
        out = np.empty((len(systems), len(segments)), dtype=np.float64)
        scores = self.scores
        for i, sys in enumerate(systems):
            for j, seg in enumerate(segments):
                try:
                    out[i, j] = scores[(sys, seg)]
                except KeyError:
                    raise CoverageError(
                        f"evaluator {self.evaluator_id!r} has no score for "
                        f"system {sys!r}, segment {seg!r}"
                    ) from None
        return out

    def restricted(self, segments: Iterable[str]) -> "ScoreTable":
        keep = set(segments)
        return ScoreTable(self.evaluator_id, tuple(r for r in self.rows if r[1] in keep))


@dataclass(frozen=True)
class AnnotatedDataset:
    testset_id: str
    langpair: str
    segments: tuple[str, ...]
    systems: tuple[str, ...]
    score_tables: Mapping[str, ScoreTable] = field(default_factory=dict)

    @classmethod
    def from_tables(
        cls,
        tables: Iterable[ScoreTable],
        testset_id: str = "",
        langpair: str = "",
        systems: Sequence[str] | None = None,
        segments: Sequence[str] | None = None,
    ) -> "AnnotatedDataset":
        """Build a dataset, inferring sorted system/segment lists when not given."""
        tables = list(tables)
        if systems is None:
            systems = sorted({r[0] for t in tables for r in t.rows})
        if segments is None:
            segments = sorted({r[1] for t in tables for r in t.rows})
        return cls(
            testset_id=testset_id,
            langpair=langpair,
            segments=tuple(segments),
            systems=tuple(systems),
            score_tables={t.evaluator_id: t for t in tables},
        )

    @property
    def evaluators(self) -> list[str]:
        return sorted(self.score_tables)

    def table(self, evaluator_id: str) -> ScoreTable:
        try:
            return self.score_tables[evaluator_id]
        except KeyError:
            raise ValidationError(f"unknown evaluator {evaluator_id!r}") from None

    def fully_covered_segments(self, evaluator_id: str) -> set[str]:
        table = self.table(evaluator_id)
        return {seg for seg in self.segments if table.covers_segment(seg, self.systems)}

    def with_segments(self, segments: Iterable[str]) -> "AnnotatedDataset":
        keep = set(segments)
        segs = tuple(s for s in self.segments if s in keep)
        return AnnotatedDataset(
            testset_id=self.testset_id,
            langpair=self.langpair,
            segments=segs,
            systems=self.systems,
            score_tables={k: t.restricted(segs) for k, t in self.score_tables.items()},
        )


@dataclass(frozen=True)
class RaterAssignment:
    """Which raters annotated which segment.

    ``k`` is the expected number of annotations per segment; segments whose
    cover has a different size are listed in :attr:`flagged`.
    """

    raters: frozenset[str]
    k: int
    covers: Mapping[str, frozenset[str]]

    @property
    def flagged(self) -> list[str]:
        return sorted(seg for seg, cover in self.covers.items() if len(cover) != self.k)

    @property
    def segments(self) -> list[str]:
        return sorted(self.covers)

    @classmethod
    def from_covers(cls, covers: Mapping[str, Iterable[str]], k: int | None = None,
                    raters: Iterable[str] = ()) -> "RaterAssignment":
        frozen = {seg: frozenset(c) for seg, c in covers.items()}
        all_raters = frozenset(raters).union(*frozen.values()) if frozen else frozenset(raters)
        if k is None:
            k = modal_cover_size(frozen.values())
        return cls(raters=all_raters, k=k, covers=frozen)


def modal_cover_size(covers: Iterable[frozenset[str]]) -> int:
    """Most frequent cover size; ties go to the larger size."""
    counts = Counter(len(c) for c in covers)
    if not counts:
        return 0
    return max(counts, key=lambda size: (counts[size], size))


@dataclass(frozen=True)
class PartitionSolution:
    groups: tuple[frozenset[str], ...]
    retained_segments: frozenset[str]

    @property
    def objective(self) -> int:
        return len(self.retained_segments)

    def canonical_groups(self) -> tuple[tuple[str, ...], ...]:
        return tuple(sorted(tuple(sorted(g)) for g in self.groups))

    def to_json(self) -> dict:
        return {
            "k": len(self.groups),
            "objective": self.objective,
            "groups": [list(g) for g in self.canonical_groups()],
            "retained_segments": sorted(self.retained_segments),
        }

    @classmethod
    def from_json(cls, obj: Mapping) -> "PartitionSolution":
        return cls(
            groups=tuple(frozenset(g) for g in obj["groups"]),
            retained_segments=frozenset(obj["retained_segments"]),
        )


def validate_dataset(dataset: AnnotatedDataset) -> list[str]:
    violations = []
    for kind, ids in (("segment", dataset.segments), ("system", dataset.systems)):
        for item, n in sorted(Counter(ids).items()):
            if n > 1:
                violations.append(f"duplicate {kind} id {item!r}")
    systems, segments = set(dataset.systems), set(dataset.segments)
    for name in sorted(dataset.score_tables):
        table = dataset.score_tables[name]
        if table.evaluator_id != name:
            violations.append(f"evaluator {name!r}: table labelled {table.evaluator_id!r}")
        seen = set()
        for sys, seg, score in table.rows:
            where = f"evaluator {name!r}, system {sys!r}, segment {seg!r}"
            if (sys, seg) in seen:
                violations.append(f"duplicate key: {where}")
            seen.add((sys, seg))
            if sys not in systems:
                violations.append(f"unknown system: {where}")
            if seg not in segments:
                violations.append(f"unknown segment: {where}")
            if not math.isfinite(score):
                violations.append(f"non-finite score: {where}")
    return violations


def validate_assignment(assignment: RaterAssignment) -> list[str]:
    violations = []
    for seg in assignment.segments:
        for r in sorted(assignment.covers[seg] - assignment.raters):
            violations.append(f"segment {seg!r}: rater {r!r} not in rater set")
    for seg in assignment.flagged:
        violations.append(
            f"segment {seg!r}: cover size {len(assignment.covers[seg])} != k={assignment.k}"
        )
    return violations
