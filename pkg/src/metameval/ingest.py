"""Readers and writers for the canonical TSV interchange files.

Three layouts, all UTF-8, tab-separated, LF line endings, one header row::

    scores.tsv   evaluator  system  segment  score
    spans.tsv    rater  system  segment  start  end  category  severity
    assign.tsv   segment  rater

Adapters for the various WMT releases are expected to convert into these
before anything here is called.
"""

from __future__ import annotations

import io
import json
import re
from collections import defaultdict
from pathlib import Path
from typing import Iterable, Iterator, TextIO

from .core import (
    AnnotatedDataset,
    ParseError,
    RaterAssignment,
    ScoreTable,
    modal_cover_size,
)
from .protocols import Severity, Span, SpanAnnotationSet

SCORES_HEADER = ("evaluator", "system", "segment", "score")
SPANS_HEADER = ("rater", "system", "segment", "start", "end", "category", "severity")
ASSIGN_HEADER = ("segment", "rater")

# Plain decimal literal: no locale separators, no nan/inf.
_NUMBER = re.compile(r"[+-]?(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?")
_INTEGER = re.compile(r"[+-]?\d+")


def _as_text(text: str | TextIO) -> str:
    return text if isinstance(text, str) else text.read()


def _rows(text: str | TextIO, header: tuple[str, ...]) -> Iterator[tuple[int, list[str]]]:
    lines = _as_text(text).split("\n")
    if lines and lines[-1] == "":
        lines.pop()
    if not lines:
        raise ParseError("empty input, expected header", line=1)
    got = tuple(lines[0].rstrip("\r").split("\t"))
    if got != header:
        raise ParseError(f"bad header {got!r}, expected {header!r}", line=1)
    for lineno, line in enumerate(lines[1:], start=2):
        line = line.rstrip("\r")
        if not line:
            continue
        fields = line.split("\t")
        if len(fields) != len(header):
            raise ParseError(f"expected {len(header)} columns, got {len(fields)}", line=lineno)
        yield lineno, fields


def parse_number(field: str, lineno: int | None = None) -> float:
    if not _NUMBER.fullmatch(field):
        raise ParseError(f"non-numeric score {field!r}", line=lineno)
    return float(field)


def parse_scores_tsv(text: str | TextIO) -> list[ScoreTable]:
    """One ScoreTable per evaluator, in order of first appearance.

    An empty score field marks the (system, segment) pair as missing.
    """
    rows: dict[str, list[tuple[str, str, float]]] = {}
    seen: set[tuple[str, str, str]] = set()
    for lineno, (ev, sys, seg, score) in _rows(text, SCORES_HEADER):
        key = (ev, sys, seg)
        if key in seen:
            raise ParseError(f"duplicate key {key!r}", line=lineno)
        seen.add(key)
        bucket = rows.setdefault(ev, [])
        if score == "":
            continue
        bucket.append((sys, seg, parse_number(score, lineno)))
    return [ScoreTable(ev, tuple(r)) for ev, r in rows.items()]


def parse_mqm_tsv(text: str | TextIO) -> SpanAnnotationSet:
    """Error spans grouped by (rater, system, segment), input order kept.

    ``start = end = -1`` denotes an error covering the whole segment.
    """
    out: dict[tuple[str, str, str], list[Span]] = defaultdict(list)
    for lineno, (rater, sys, seg, start, end, category, severity) in _rows(text, SPANS_HEADER):
        if not (_INTEGER.fullmatch(start) and _INTEGER.fullmatch(end)):
            raise ParseError(f"span offsets must be integers, got {start!r}, {end!r}", line=lineno)
        s, e = int(start), int(end)
        if (s, e) != (-1, -1):
            if s < 0 or e < 0:
                raise ParseError(f"negative span offset ({s}, {e})", line=lineno)
            if s > e:
                raise ParseError(f"span start {s} > end {e}", line=lineno)
        try:
            sev = Severity.parse(severity)
        except ValueError as exc:
            raise ParseError(str(exc), line=lineno) from None
        out[(rater, sys, seg)].append(Span(s, e, category, sev))
    return SpanAnnotationSet({k: tuple(v) for k, v in out.items()})


def parse_assignment(text: str | TextIO) -> RaterAssignment:
    covers: dict[str, set[str]] = defaultdict(set)
    for _, (seg, rater) in _rows(text, ASSIGN_HEADER):
        covers[seg].add(rater)
    if not covers:
        raise ParseError("no assignments")
    frozen = {seg: frozenset(c) for seg, c in covers.items()}
    return RaterAssignment(
        raters=frozenset().union(*frozen.values()),
        k=modal_cover_size(frozen.values()),
        covers=frozen,
    )


def format_number(value: float) -> str:
    # repr is the shortest string that round-trips exactly
    return repr(float(value))


def _write(header: Iterable[str], rows: Iterable[Iterable[str]]) -> str:
    buf = io.StringIO()
    buf.write("\t".join(header) + "\n")
    for row in rows:
        buf.write("\t".join(row) + "\n")
    return buf.getvalue()


def export_scores(tables: Iterable[ScoreTable]) -> str:
    rows = sorted(
        (t.evaluator_id, sys, seg, v) for t in tables for (sys, seg), v in t.scores.items()
    )
    return _write(SCORES_HEADER, ((ev, sys, seg, format_number(v)) for ev, sys, seg, v in rows))


def export_canonical(dataset: AnnotatedDataset) -> str:
    return export_scores(dataset.score_tables.values())


def export_spans(spans: SpanAnnotationSet) -> str:
    rows = []
    for (rater, sys, seg) in sorted(spans.annotations):
        for sp in spans.annotations[(rater, sys, seg)]:
            rows.append((rater, sys, seg, str(sp.start), str(sp.end), sp.category, sp.severity.value))
    return _write(SPANS_HEADER, rows)


def export_assignment(assignment: RaterAssignment) -> str:
    rows = ((seg, r) for seg in sorted(assignment.covers) for r in sorted(assignment.covers[seg]))
    return _write(ASSIGN_HEADER, rows)


def load_dataset(path: str | Path) -> AnnotatedDataset:
    """Read a dataset directory: ``scores.tsv`` plus an optional ``meta.json``.

    ``meta.json`` may carry ``testset_id``, ``langpair``, ``systems`` and
    ``segments``; whatever is absent is inferred from the scores.
    """
    path = Path(path)
    scores = path / "scores.tsv" if path.is_dir() else path
    meta_path = scores.parent / "meta.json"
    meta = json.loads(meta_path.read_text(encoding="utf-8")) if meta_path.exists() else {}
    tables = parse_scores_tsv(scores.read_text(encoding="utf-8"))
    return AnnotatedDataset.from_tables(
        tables,
        testset_id=meta.get("testset_id", scores.parent.name),
        langpair=meta.get("langpair", ""),
        systems=meta.get("systems"),
        segments=meta.get("segments"),
    )


def save_dataset(dataset: AnnotatedDataset, path: str | Path) -> None:
    path = Path(path)
    path.mkdir(parents=True, exist_ok=True)
    _write_text(path / "scores.tsv", export_canonical(dataset))
    meta = {
        "testset_id": dataset.testset_id,
        "langpair": dataset.langpair,
        "systems": list(dataset.systems),
        "segments": list(dataset.segments),
    }
    _write_text(path / "meta.json", json.dumps(meta, indent=2, sort_keys=True) + "\n")


def _write_text(path: Path, text: str) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        f.write(text)
