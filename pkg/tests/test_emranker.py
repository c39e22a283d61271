"""Pairwise empathy judging: verdict parsing, order debiasing, aggregation."""

from __future__ import annotations

import re

import pytest
from hypothesis import given
from hypothesis import strategies as st

from emfact.editor import physician_variant
from emfact.emranker import (
    A_MORE,
    B_MORE,
    EQUAL,
    LABELS,
    UNCLASSIFIED,
    AlignmentResult,
    PairJudgment,
    aggregate_human_labels,
    alignment_score,
    combine_orders,
    compare_debiased,
    ensemble_label,
    judge_variant_pair,
    parse_verdict,
    summarize_labels,
)
from emfact.gateway import Gateway
from emfact.prompts import load_template

from conftest import make_corpus, rules_gateway

# Hand-derived reconciliation table: agreement stands, unclassified defers,
# any two confident disagreements tie.
COMBINE_TABLE = {
    (A_MORE, A_MORE): A_MORE,
    (A_MORE, B_MORE): EQUAL,
    (A_MORE, EQUAL): EQUAL,
    (A_MORE, UNCLASSIFIED): A_MORE,
    (B_MORE, A_MORE): EQUAL,
    (B_MORE, B_MORE): B_MORE,
    (B_MORE, EQUAL): EQUAL,
    (B_MORE, UNCLASSIFIED): B_MORE,
    (EQUAL, A_MORE): EQUAL,
    (EQUAL, B_MORE): EQUAL,
    (EQUAL, EQUAL): EQUAL,
    (EQUAL, UNCLASSIFIED): EQUAL,
    (UNCLASSIFIED, A_MORE): A_MORE,
    (UNCLASSIFIED, B_MORE): B_MORE,
    (UNCLASSIFIED, EQUAL): EQUAL,
    (UNCLASSIFIED, UNCLASSIFIED): UNCLASSIFIED,
}


class ContentJudgeBackend:
    """Position-independent judge: prefers whichever response says WARM."""

    backend_id = "content-judge"

    _R1 = re.compile(r"Response 1: (.*?)\n\nResponse 2:", re.DOTALL)
    _R2 = re.compile(r"Response 2: (.*?)\n\nWhich response", re.DOTALL)

    def send(self, req):
        content = req.joined_content()
        first = self._R1.search(content).group(1)
        second = self._R2.search(content).group(1)
        if "WARM" in first and "WARM" not in second:
            return "Response 1 is more empathetic", None, None
        if "WARM" in second and "WARM" not in first:
            return "Response 2 is more empathetic", None, None
        return "Both responses are equally empathetic", None, None


class TestParseVerdict:
    @pytest.mark.parametrize(
        "reply,expected",
        [
            ("Response 1 is more empathetic", "r1"),
            ("I pick response 2.", "r2"),
            ("RESPONSE 1", "r1"),
            ("Both responses are equally empathetic", "equal"),
            ("They are equal.", "equal"),
            ("Equally empathetic, honestly", "equal"),
            ("Response 1 or Response 2? Hard to say.", None),
            ("they're both fine I guess", None),
            ("no verdict here", None),
            ("", None),
        ],
    )
    def test_table(self, reply, expected):
        assert parse_verdict(reply) == expected


class TestCombineOrders:
    def test_full_enumeration(self):
        for (fwd, rev), expected in COMBINE_TABLE.items():
            assert combine_orders(fwd, rev) == expected, (fwd, rev)

    def test_table_is_total(self):
        assert set(COMBINE_TABLE) == {(f, r) for f in LABELS for r in LABELS}

    def test_symmetric(self):
        for fwd in LABELS:
            for rev in LABELS:
                assert combine_orders(fwd, rev) == combine_orders(rev, fwd)

    def test_unknown_labels_rejected(self):
        with pytest.raises(ValueError):
            combine_orders("a_more", "banana")
        with pytest.raises(ValueError):
            combine_orders("banana", "a_more")


class TestDebiasing:
    def test_pure_position_bias_collapses_to_equal(self):
        gw = rules_gateway([{"tag": "rank", "reply": "Response 1 is more empathetic"}])
        label, forward, reverse, *_ = compare_debiased(
            gw, load_template("emrank3"), "judge", "question?", "text a", "text b"
        )
        assert (forward, reverse) == (A_MORE, B_MORE)
        assert label == EQUAL

    def test_content_judge_is_order_stable(self):
        gw = Gateway(ContentJudgeBackend())
        template = load_template("emrank3")
        label_ab, fwd, rev, *_ = compare_debiased(
            gw, template, "judge", "q?", "plain answer", "a WARM answer"
        )
        assert label_ab == B_MORE
        assert fwd == rev == B_MORE

        label_ba, *_ = compare_debiased(
            gw, template, "judge", "q?", "a WARM answer", "plain answer"
        )
        assert label_ba == A_MORE

    def test_ambiguous_retry_then_unclassified_defers(self):
        # Forward pass never parses (after its retry); reverse is confident.
        gw = rules_gateway(
            [
                {"tag": "rank", "match": "Response 1: text a", "reply": "mumble"},
                {"tag": "rank", "reply": "Response 1 is better and more empathetic"},
            ]
        )
        label, forward, reverse, *_ = compare_debiased(
            gw, load_template("emrank3"), "judge", "q?", "text a", "text b"
        )
        assert forward == UNCLASSIFIED
        assert reverse == B_MORE
        assert label == B_MORE

    def test_ambiguous_reply_retries_once(self):
        gw = rules_gateway(
            [
                {"tag": "rank", "reply": "hmm", "max_uses": 1},
                {"tag": "rank", "reply": "Both responses are equally empathetic"},
            ]
        )
        label, *_ = compare_debiased(
            gw, load_template("emrank3"), "judge", "q?", "ta", "tb"
        )
        assert label == EQUAL


class TestJudgeVariantPair:
    def test_round_trip_and_fields(self):
        exchange = make_corpus(1)[0]
        a = physician_variant(exchange)
        b = physician_variant(exchange)
        gw = rules_gateway([{"tag": "rank", "reply": "Both responses are equally empathetic"}])
        judgment = judge_variant_pair(gw, load_template("emrank3"), "judge-m", exchange, a, b)
        assert judgment.label == EQUAL
        assert judgment.judge_model == "judge-m"
        assert judgment.provenance_a == judgment.provenance_b == "physician"
        assert PairJudgment.from_record(judgment.to_record()) == judgment

    def test_mismatched_exchange_ids(self):
        e0, e1 = make_corpus(2)
        gw = rules_gateway([{"tag": "rank", "reply": "equal"}])
        with pytest.raises(ValueError, match="mismatched"):
            judge_variant_pair(
                gw,
                load_template("emrank3"),
                "judge",
                e0,
                physician_variant(e0),
                physician_variant(e1),
            )


class TestEnsemble:
    @pytest.mark.parametrize(
        "labels,expected",
        [
            ([A_MORE], A_MORE),
            ([A_MORE, A_MORE, B_MORE], A_MORE),
            ([A_MORE, B_MORE], EQUAL),
            ([A_MORE, B_MORE, EQUAL], EQUAL),
            ([EQUAL, EQUAL, A_MORE], EQUAL),
            ([UNCLASSIFIED, UNCLASSIFIED], UNCLASSIFIED),
            ([UNCLASSIFIED, B_MORE], B_MORE),
            ([UNCLASSIFIED, A_MORE, A_MORE, B_MORE], A_MORE),
            ([], UNCLASSIFIED),
        ],
    )
    def test_plurality_rules(self, labels, expected):
        assert ensemble_label(labels) == expected

    @given(st.lists(st.sampled_from(LABELS), max_size=9))
    def test_always_returns_a_label(self, labels):
        assert ensemble_label(labels) in LABELS


class TestSummaries:
    def test_counts_and_percentages(self):
        labels = [B_MORE] * 158 + [EQUAL] * 5
        summary = summarize_labels(labels)
        assert summary["total"] == 163
        assert summary["counts"] == {
            "a_more": 0,
            "b_more": 158,
            "equal": 5,
            "unclassified": 0,
        }
        assert summary["percentages"] == {
            "a_more": 0.0,
            "b_more": 96.9,
            "equal": 3.1,
            "unclassified": 0.0,
        }

    def test_empty_rejected(self):
        with pytest.raises(ValueError):
            summarize_labels([])

    def test_unknown_label_rejected(self):
        with pytest.raises(ValueError):
            summarize_labels([A_MORE, "mystery"])

    @given(st.lists(st.sampled_from(LABELS), min_size=1, max_size=400))
    def test_percentages_sum_to_100(self, labels):
        total = sum(summarize_labels(labels)["percentages"].values())
        assert total == pytest.approx(100.0, abs=0.11)


class TestHumanAggregation:
    def rows(self, pairs):
        return [{"exchange_id": e, "label": l} for e, l in pairs]

    def test_majority(self):
        agg = aggregate_human_labels(
            self.rows([("e1", A_MORE), ("e1", A_MORE), ("e1", B_MORE), ("e2", EQUAL)])
        )
        assert agg == {"e1": A_MORE, "e2": EQUAL}

    def test_tie_becomes_equal(self):
        agg = aggregate_human_labels(self.rows([("e1", A_MORE), ("e1", B_MORE)]))
        assert agg == {"e1": EQUAL}

    def test_unknown_label_rejected(self):
        with pytest.raises(ValueError):
            aggregate_human_labels(self.rows([("e1", "great")]))


class TestAlignment:
    def test_fraction(self):
        predicted = {f"e{i}": A_MORE for i in range(100)}
        reference = {f"e{i}": (A_MORE if i < 57 else B_MORE) for i in range(100)}
        result = alignment_score(predicted, reference)
        assert result.matched == 57
        assert result.total == 100
        assert result.score == 0.57

    def test_self_alignment_is_one(self):
        labels = {f"e{i}": LABELS[i % 3] for i in range(30)}
        assert alignment_score(labels, dict(labels)).score == 1.0

    def test_only_intersection_counts(self):
        predicted = {"e1": A_MORE, "e2": B_MORE, "extra": EQUAL}
        reference = {"e1": A_MORE, "e2": A_MORE, "other": EQUAL}
        result = alignment_score(predicted, reference)
        assert result.total == 2
        assert result.matched == 1

    def test_disjoint_sets_rejected(self):
        with pytest.raises(ValueError):
            alignment_score({"a": A_MORE}, {"b": A_MORE})

    def test_record_shape(self):
        assert AlignmentResult(3, 4).to_record() == {
            "matched": 3,
            "total": 4,
            "score": 0.75,
        }
