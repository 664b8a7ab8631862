"""Segment scores under the MQM, ESA, pSQM and DA+SQM protocols.

Every score leaving this module is oriented higher-is-better: MQM penalty
totals are negated, scalar protocols pass through after a range check.
"""

from __future__ import annotations

import configparser
import enum
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence

from .core import (
    ConfigurationError,
    CoverageError,
    PartitionConsistencyError,
    RaterAssignment,
    ScoreTable,
    ValidationError,
)


class Severity(str, enum.Enum):
    NEUTRAL = "Neutral"
    MINOR = "Minor"
    MAJOR = "Major"
    CRITICAL = "Critical"

    @classmethod
    def parse(cls, label: str) -> "Severity":
        for sev in cls:
            if sev.value.lower() == label.strip().lower():
                return sev
        raise ValueError(f"unknown severity {label!r}")


@dataclass(frozen=True)
class Span:
    start: int
    end: int
    category: str
    severity: Severity

    @property
    def whole_segment(self) -> bool:
        return self.start == -1 and self.end == -1


@dataclass(frozen=True)
class SpanAnnotationSet:
    annotations: Mapping[tuple[str, str, str], tuple[Span, ...]] = field(default_factory=dict)

    def spans(self, rater: str, system: str, segment: str) -> tuple[Span, ...]:
        return self.annotations.get((rater, system, segment), ())

    @property
    def systems(self) -> list[str]:
        return sorted({k[1] for k in self.annotations})


DEFAULT_WEIGHTS = {
    Severity.NEUTRAL: 0.0,
    Severity.MINOR: 1.0,
    Severity.MAJOR: 5.0,
    Severity.CRITICAL: 10.0,
}


@dataclass(frozen=True)
class SeverityWeights:
    """Penalty per severity, with optional (category, severity) overrides.

    Category matching is case-insensitive and hierarchical on ``/``: an
    override for ``fluency`` also applies to ``Fluency/Punctuation`` unless a
    more specific entry exists.
    """

    weights: Mapping[Severity, float] = field(default_factory=lambda: dict(DEFAULT_WEIGHTS))
    overrides: Mapping[tuple[str, Severity], float] = field(default_factory=dict)

    def __post_init__(self):
        for key, w in list(self.weights.items()) + list(self.overrides.items()):
            if w < 0:
                raise ConfigurationError(f"negative weight {w} for {key}")

    def weight(self, span: Span) -> float:
        parts = span.category.lower().split("/")
        while parts and parts != [""]:
            w = self.overrides.get(("/".join(parts), span.severity))
            if w is not None:
                return w
            parts = parts[:-1]
        try:
            return self.weights[span.severity]
        except KeyError:
            raise ConfigurationError(f"no weight configured for severity {span.severity.value}") from None

    def updated(self, settings: Mapping[str, str]) -> "SeverityWeights":
        """Apply ``severity.weights.<sev>[.<category>] = value`` style settings.

        Keys may omit the ``severity.weights.`` prefix.
        """
        weights = dict(self.weights)
        overrides = dict(self.overrides)
        for key, raw in settings.items():
            key = key.strip().lower()
            if key.startswith("severity.weights."):
                key = key[len("severity.weights."):]
            sev_label, _, category = key.partition(".")
            try:
                sev = Severity.parse(sev_label)
                value = float(raw)
            except ValueError as exc:
                raise ConfigurationError(f"bad severity weight {key!r} = {raw!r}: {exc}") from None
            if category:
                overrides[(category, sev)] = value
            else:
                weights[sev] = value
        return SeverityWeights(weights, overrides)


def load_weights_config(text: str, base: SeverityWeights | None = None) -> SeverityWeights:
    """Read ``severity.weights.*`` keys from a key = value config file."""
    parser = configparser.ConfigParser()
    parser.optionxform = str
    parser.read_string("[config]\n" + text)
    settings = {k: v for k, v in parser["config"].items() if k.lower().startswith("severity.weights.")}
    return (base or SeverityWeights()).updated(settings)


def mqm_segment_score(spans: Iterable[Span], weights: SeverityWeights | None = None) -> float:
    weights = weights or SeverityWeights()
    total = float(sum(weights.weight(sp) for sp in spans))
    return -total if total else 0.0  # no -0.0 in exports


@dataclass(frozen=True)
class ProtocolSpec:
    name: str
    low: float | None
    high: float | None
    negate: bool = False

    @property
    def scalar(self) -> bool:
        return not self.negate


PROTOCOLS = {
    "MQM": ProtocolSpec("MQM", None, None, negate=True),
    "ESA": ProtocolSpec("ESA", 0.0, 100.0),
    "pSQM": ProtocolSpec("pSQM", 0.0, 6.0),
    "DA+SQM": ProtocolSpec("DA+SQM", 0.0, 100.0),
}


def get_protocol(name: str) -> ProtocolSpec:
    for key, spec in PROTOCOLS.items():
        if key.lower() == name.lower():
            return spec
    raise ConfigurationError(f"unknown protocol {name!r}; choose from {', '.join(PROTOCOLS)}")


def scalar_segment_score(value: float, spec: ProtocolSpec) -> float:
    if not spec.scalar:
        raise ConfigurationError(f"{spec.name} is not a scalar protocol")
    if not spec.low <= value <= spec.high:
        raise ValidationError(
            f"{spec.name} score {value} outside [{spec.low:g}, {spec.high:g}]"
        )
    return value


def system_score(table: ScoreTable, system_id: str, segments: Iterable[str]) -> float:
    """Mean segment score of one system over ``segments``."""
    segments = list(segments)
    if not segments:
        raise CoverageError("system score over an empty segment set")
    total = 0.0
    for seg in segments:
        v = table.get(system_id, seg)
        if v is None:
            raise CoverageError(
                f"evaluator {table.evaluator_id!r} has no score for {system_id!r}, {seg!r}"
            )
        total += v
    return total / len(segments)


def assemble_evaluator(
    group: Iterable[str],
    annotations: SpanAnnotationSet | Mapping[str, ScoreTable],
    assignment: RaterAssignment,
    retained: Iterable[str],
    systems: Sequence[str] | None = None,
    evaluator_id: str = "composite",
    weights: SeverityWeights | None = None,
    protocol: ProtocolSpec | None = None,
) -> ScoreTable:
    """Merge the work of a rater group into one evaluator.

    Each retained segment must be covered by exactly one rater of ``group``;
    that rater's score is used for every system. With span annotations a
    covered (system, segment) without spans scores 0 (no errors found).
    With scalar annotations (``rater -> ScoreTable``) missing items are left
    out of the result, and values are range-checked if ``protocol`` is given.
    """
    group = frozenset(group)
    is_spans = isinstance(annotations, SpanAnnotationSet)
    if systems is None:
        if is_spans:
            systems = annotations.systems
        else:
            systems = sorted({sys for t in annotations.values() for sys, _ in t.scores})
    rows = []
    for seg in sorted(retained):
        owners = sorted(assignment.covers.get(seg, frozenset()) & group)
        if len(owners) != 1:
            raise PartitionConsistencyError(
                f"segment {seg!r} covered by {len(owners)} raters of group {sorted(group)}"
            )
        rater = owners[0]
        for sys in systems:
            if is_spans:
                score = mqm_segment_score(annotations.spans(rater, sys, seg), weights)
            else:
                table = annotations.get(rater)
                score = table.get(sys, seg) if table is not None else None
                if score is None:
                    continue
                if protocol is not None:
                    score = scalar_segment_score(score, protocol)
            rows.append((sys, seg, float(score)))
    return ScoreTable(evaluator_id, tuple(rows))
