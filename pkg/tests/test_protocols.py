import pytest
from hypothesis import given
from hypothesis import strategies as st

from metameval.core import (
    ConfigurationError,
    CoverageError,
    PartitionConsistencyError,
    RaterAssignment,
    ScoreTable,
    ValidationError,
)
from metameval.protocols import (
    PROTOCOLS,
    Severity,
    SeverityWeights,
    Span,
    SpanAnnotationSet,
    assemble_evaluator,
    get_protocol,
    load_weights_config,
    mqm_segment_score,
    scalar_segment_score,
    system_score,
)


def span(sev, category="Accuracy"):
    return Span(0, 1, category, sev)


def test_no_spans_is_perfect():
    assert mqm_segment_score([]) == 0


def test_two_major_one_minor():
    # 5 + 5 + 1 under the default weights
    spans = [span(Severity.MAJOR), span(Severity.MAJOR), span(Severity.MINOR)]
    assert mqm_segment_score(spans) == -11


def test_neutral_costs_nothing():
    score = mqm_segment_score([span(Severity.NEUTRAL)])
    assert score == 0
    assert str(score) == "0.0"


def test_missing_weight_is_configuration_error():
    weights = SeverityWeights(weights={Severity.MINOR: 1.0})
    with pytest.raises(ConfigurationError):
        mqm_segment_score([span(Severity.MAJOR)], weights)


def test_negative_weight_rejected():
    with pytest.raises(ConfigurationError):
        SeverityWeights(weights={Severity.MINOR: -1.0})


def test_category_override_is_hierarchical():
    weights = SeverityWeights().updated({"severity.weights.minor.fluency/punctuation": "0.1"})
    assert weights.weight(span(Severity.MINOR, "Fluency/Punctuation")) == 0.1
    assert weights.weight(span(Severity.MINOR, "Fluency/Punctuation/Comma")) == 0.1
    assert weights.weight(span(Severity.MINOR, "Fluency/Grammar")) == 1.0
    assert weights.weight(span(Severity.MAJOR, "Fluency/Punctuation")) == 5.0


def test_weights_config_file():
    weights = load_weights_config("severity.weights.major = 25\nseed = 3\nseverity.weights.critical=30\n")
    assert weights.weights[Severity.MAJOR] == 25
    assert weights.weights[Severity.CRITICAL] == 30
    assert weights.weights[Severity.MINOR] == 1


severities = st.sampled_from(list(Severity))
span_lists = st.lists(st.builds(span, severities, st.sampled_from(["Accuracy", "Fluency/Punctuation"])), max_size=8)
override = SeverityWeights().updated({"minor.fluency/punctuation": "0.1"})


@given(span_lists, span_lists)
def test_additive_over_concatenation(a, b):
    assert mqm_segment_score(a + b, override) == pytest.approx(
        mqm_segment_score(a, override) + mqm_segment_score(b, override), abs=1e-12
    )


@given(span_lists, st.randoms())
def test_order_invariant(spans, rnd):
    shuffled = list(spans)
    rnd.shuffle(shuffled)
    assert mqm_segment_score(shuffled) == mqm_segment_score(spans)


def test_scalar_identity_in_range():
    assert scalar_segment_score(63, PROTOCOLS["ESA"]) == 63
    assert scalar_segment_score(100, PROTOCOLS["DA+SQM"]) == 100
    assert scalar_segment_score(0, PROTOCOLS["pSQM"]) == 0


def test_psqm_out_of_range():
    with pytest.raises(ValidationError, match=r"pSQM.*\[0, 6\]"):
        scalar_segment_score(7, PROTOCOLS["pSQM"])


def test_mqm_is_not_scalar():
    with pytest.raises(ConfigurationError):
        scalar_segment_score(1, PROTOCOLS["MQM"])


def test_protocol_lookup():
    assert get_protocol("da+sqm").name == "DA+SQM"
    with pytest.raises(ConfigurationError):
        get_protocol("cSQM")


def table(values):
    return ScoreTable("e", tuple(("A", f"s{i}", float(v)) for i, v in enumerate(values)))


@pytest.mark.parametrize("values, expected", [([2, 4], 3), ([-11], -11), ([0, 0, 0], 0)])
def test_system_score_mean(values, expected):
    assert system_score(table(values), "A", [f"s{i}" for i in range(len(values))]) == expected


def test_system_score_uncovered():
    with pytest.raises(CoverageError):
        system_score(table([1]), "A", ["s0", "s1"])


@given(st.lists(st.integers(-100, 100), min_size=1, max_size=20), st.randoms())
def test_system_score_order_invariant(values, rnd):
    segs = [f"s{i}" for i in range(len(values))]
    shuffled = list(segs)
    rnd.shuffle(shuffled)
    t = table(values)
    assert system_score(t, "A", shuffled) == system_score(t, "A", segs) == sum(values) / len(values)


# assembling evaluators

ASSIGN = RaterAssignment.from_covers({"s1": {"r1", "r2"}, "s2": {"r1", "r3"}, "s3": {"r2", "r3"}})


def rater_tables():
    out = {}
    for r in ("r1", "r2", "r3"):
        rows = tuple(
            (sys, seg, float(int(r[1]) * 10 + int(seg[1])))
            for seg, cover in ASSIGN.covers.items() if r in cover for sys in ("A", "B")
        )
        out[r] = ScoreTable(r, rows)
    return out


def test_single_rater_group_is_identity():
    t = rater_tables()
    out = assemble_evaluator({"r1"}, t, ASSIGN, {"s1", "s2"})
    assert out.scores == t["r1"].scores


def test_disjoint_halves_concatenate():
    t = rater_tables()
    out = assemble_evaluator({"r2", "r3"}, t, ASSIGN, {"s1", "s2"}, evaluator_id="g")
    assert out.evaluator_id == "g"
    assert out.scores == {**t["r2"].restricted({"s1"}).scores, **t["r3"].restricted({"s2"}).scores}
    assert out.coverage == {(sys, seg) for sys in ("A", "B") for seg in ("s1", "s2")}


def test_overlapping_group_rejected():
    with pytest.raises(PartitionConsistencyError):
        assemble_evaluator({"r1", "r2"}, rater_tables(), ASSIGN, {"s1"})


def test_uncovered_segment_rejected():
    with pytest.raises(PartitionConsistencyError):
        assemble_evaluator({"r1"}, rater_tables(), ASSIGN, {"s3"})


def test_scalar_range_checked():
    with pytest.raises(ValidationError):
        assemble_evaluator({"r1"}, rater_tables(), ASSIGN, {"s1"}, protocol=PROTOCOLS["pSQM"])


def test_mqm_assembly_scores_missing_items_as_perfect():
    spans = SpanAnnotationSet({
        ("r1", "A", "s1"): (span(Severity.MAJOR),),
        ("r2", "B", "s3"): (span(Severity.MINOR), span(Severity.MINOR)),
    })
    out = assemble_evaluator({"r1"}, spans, ASSIGN, {"s1", "s2"}, systems=["A", "B"])
    assert out.scores == {
        ("A", "s1"): -5.0, ("B", "s1"): 0.0,
        ("A", "s2"): 0.0, ("B", "s2"): 0.0,
    }
    out2 = assemble_evaluator({"r2"}, spans, ASSIGN, {"s3"}, systems=["A", "B"])
    assert out2.scores == {("A", "s3"): 0.0, ("B", "s3"): -2.0}
