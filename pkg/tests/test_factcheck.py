"""Factual-consistency scoring: decomposition, entailment, aggregation."""

from __future__ import annotations

import json
import random
from statistics import fmean

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from emfact.editor import ResponseVariant, physician_variant
from emfact.factcheck import (
    EDGE_RULES,
    FABRICATION_CATEGORIES,
    AtomicFactSet,
    CorpusFactReport,
    EntailmentVerdict,
    FactCheckError,
    PairFactReport,
    category_coverage,
    check_entailment,
    check_entailments,
    decompose,
    empathy_level_sweep,
    evaluate_pair,
    fact_ratio_analysis,
    parse_entailment_reply,
    score_corpus,
    score_pair,
    split_facts,
    validation_tallies,
)
from emfact.prompts import load_template

from conftest import linear_percentile, make_corpus, rules_gateway

FIVE_FACT_REPLY = (
    "The chest X-ray shows pneumonia. // The pneumonia is in the right lung. // "
    "Start antibiotics. // Take antibiotics twice daily. // Continue antibiotics for 7 days."
)


def make_pair(
    i: int,
    n_original: int,
    n_preserved: int,
    n_edited: int,
    n_grounded: int,
    edge_rule: str = "paper",
) -> PairFactReport:
    return PairFactReport.from_counts(
        f"ex{i:04d}", n_original, n_preserved, n_edited, n_grounded, edge_rule=edge_rule
    )


def flat_micro(pairs: list[PairFactReport]) -> tuple[float, float]:
    """Independent pooled-count oracle: flatten every fact to a boolean and
    take the plain ratio over the concatenated lists."""
    preserved_flags: list[bool] = []
    grounded_flags: list[bool] = []
    for p in pairs:
        preserved_flags.extend([True] * p.n_preserved + [False] * (p.n_original - p.n_preserved))
        grounded_flags.extend([True] * p.n_grounded + [False] * (p.n_edited - p.n_grounded))
    recall = sum(preserved_flags) / len(preserved_flags) if preserved_flags else 1.0
    precision = sum(grounded_flags) / len(grounded_flags) if grounded_flags else 1.0
    return recall, precision


count_pairs = st.tuples(st.integers(0, 12), st.integers(0, 12)).map(
    lambda t: (max(t), min(t))
)
pair_counts = st.tuples(count_pairs, count_pairs)


class TestSplitFacts:
    def test_five_fact_example(self):
        facts = split_facts(FIVE_FACT_REPLY)
        assert len(facts) == 5
        assert facts[0] == "The chest X-ray shows pneumonia."
        assert facts[-1] == "Continue antibiotics for 7 days."

    def test_single_fact_no_delimiter(self):
        assert split_facts("Take the tablets with food.") == ("Take the tablets with food.",)

    def test_whitespace_pieces_dropped(self):
        assert split_facts(" a //   // b // ") == ("a", "b")

    def test_dedup_casefold_and_whitespace(self):
        assert split_facts("Rest  well. // rest well. // REST WELL.") == ("Rest  well.",)

    def test_dedup_off_keeps_repeats(self):
        assert split_facts("A // a // A ", dedup=False) == ("A", "a", "A")
        assert split_facts("A // a // A ") == ("A",)

    def test_label_prefix_stripped(self):
        assert split_facts("Atomic facts: one thing // another thing") == (
            "one thing",
            "another thing",
        )

    @pytest.mark.parametrize(
        "reply",
        [
            "",
            "   ",
            "None",
            "N/A",
            "Here are the atomic facts",
            "I cannot extract facts from this text.",
            "As an AI, I do not give medical advice.",
        ],
    )
    def test_meta_only_replies_yield_nothing(self, reply):
        assert split_facts(reply) == ()

    def test_meta_pieces_filtered_among_facts(self):
        facts = split_facts("Here are the facts // Take ibuprofen. // none")
        assert facts == ("Take ibuprofen.",)


class TestAtomicFactSet:
    def make(self, facts):
        return AtomicFactSet(
            exchange_id="e", provenance="physician", facts=tuple(facts),
            extraction_model="m", raw_reply="raw",
        )

    def test_valid(self):
        assert self.make(["a", "b"]).facts == ("a", "b")

    def test_delimiter_inside_fact_rejected(self):
        with pytest.raises(FactCheckError):
            self.make(["a // b"])

    def test_blank_fact_rejected(self):
        with pytest.raises(FactCheckError):
            self.make(["  "])


class TestDecompose:
    def variant(self, text="The X-ray shows pneumonia in the right lung."):
        return ResponseVariant(
            exchange_id="e1", provenance="physician", text=text, model_id="human"
        )

    def test_round_trip_through_gateway(self):
        gw = rules_gateway([{"tag": "extract", "reply": FIVE_FACT_REPLY}])
        fact_set = decompose(gw, load_template("fact_extract"), self.variant(), "fx-model")
        assert len(fact_set.facts) == 5
        assert fact_set.extraction_model == "fx-model"
        assert fact_set.warning is False

    def test_warning_on_factless_nonempty_reply(self):
        gw = rules_gateway([{"tag": "extract", "reply": "I cannot extract facts."}])
        fact_set = decompose(gw, load_template("fact_extract"), self.variant(), "m")
        assert fact_set.facts == ()
        assert fact_set.warning is True

    def test_empty_variant_text_rejected(self):
        gw = rules_gateway([{"tag": "extract", "reply": "x"}])
        with pytest.raises(FactCheckError):
            decompose(gw, load_template("fact_extract"), self.variant(" "), "m")


class TestParseEntailmentReply:
    @pytest.mark.parametrize(
        "reply,expected",
        [
            ('{"entailment_prediction": 1}', 1),
            ('{"entailment_prediction": 0}', 0),
            ('{"entailment_prediction": true}', 1),
            ('{"entailment_prediction": false}', 0),
            ('{"entailment_prediction": "1"}', 1),
            ('{"entailment_prediction": "0"}', 0),
            ('```json\n{"entailment_prediction": 1}\n```', 1),
            ('```\n{"entailment_prediction": 0}\n```', 0),
            ('Sure: {"entailment_prediction": 1} as requested.', 1),
            ('The answer is:\n\n{"entailment_prediction": 0}', 0),
            ('{"entailment_prediction": 1, "confidence": 0.9}', 1),
        ],
    )
    def test_accepted_shapes(self, reply, expected):
        assert parse_entailment_reply(reply) == expected

    @pytest.mark.parametrize(
        "reply",
        [
            "",
            "yes",
            "entailment_prediction: 1",
            '{"prediction": 1}',
            '{"entailment_prediction": 2}',
            '{"entailment_prediction": "yes"}',
            '{"entailment_prediction": null}',
            "{broken json",
        ],
    )
    def test_garbage_is_none(self, reply):
        assert parse_entailment_reply(reply) is None

    def test_verdict_prediction_domain(self):
        with pytest.raises(FactCheckError):
            EntailmentVerdict(hypothesis="h", prediction=2, parse_failed=False, raw_reply="")


class TestCheckEntailment:
    def test_parse_failure_is_conservative_zero(self):
        gw = rules_gateway([{"tag": "entail", "reply": "shrug"}])
        verdict = check_entailment(gw, load_template("entail"), "m", "premise text", "hyp")
        assert verdict.prediction == 0
        assert verdict.parse_failed is True

    def test_retry_recovers(self):
        gw = rules_gateway(
            [
                {"tag": "entail", "reply": "shrug", "max_uses": 1},
                {"tag": "entail", "reply": '{"entailment_prediction": 1}'},
            ]
        )
        verdict = check_entailment(gw, load_template("entail"), "m", "premise", "hyp")
        assert verdict.prediction == 1
        assert verdict.parse_failed is False

    def test_empty_premise_rejected(self):
        gw = rules_gateway([{"tag": "entail", "entail_substring": True}])
        with pytest.raises(FactCheckError):
            check_entailment(gw, load_template("entail"), "m", " ", "hyp")

    def test_batch_order_matches_hypotheses(self):
        gw = rules_gateway([{"tag": "entail", "entail_substring": True}], parallelism=4)
        hypotheses = ["alpha", "bravo", "charlie", "delta"]
        verdicts = check_entailments(
            gw, load_template("entail"), "m", "alpha and charlie only", hypotheses
        )
        assert [v.hypothesis for v in verdicts] == hypotheses
        assert [v.prediction for v in verdicts] == [1, 0, 1, 0]

    def test_batch_empty(self):
        gw = rules_gateway([{"tag": "entail", "entail_substring": True}])
        assert check_entailments(gw, load_template("entail"), "m", "p", []) == ()

    def test_batch_parse_failures_flagged_per_item(self):
        gw = rules_gateway([{"tag": "entail", "reply": "never json"}], parallelism=3)
        verdicts = check_entailments(gw, load_template("entail"), "m", "p", ["h1", "h2"])
        assert all(v.parse_failed for v in verdicts)
        assert all(v.prediction == 0 for v in verdicts)


class TestPairArithmetic:
    def test_plain_ratios(self):
        pair = make_pair(0, 4, 3, 5, 4)
        assert pair.recall == 0.75
        assert pair.precision == 0.8
        assert pair.n_new == 1

    def test_both_empty_is_perfect(self):
        for rule in EDGE_RULES:
            pair = make_pair(0, 0, 0, 0, 0, edge_rule=rule)
            assert (pair.recall, pair.precision) == (1.0, 1.0)

    def test_empty_original_side(self):
        paper = make_pair(0, 0, 0, 3, 2, edge_rule="paper")
        assert paper.recall == 0.0
        assert paper.precision == pytest.approx(2 / 3)
        vacuous = make_pair(0, 0, 0, 3, 2, edge_rule="vacuous")
        assert vacuous.recall == 1.0

    def test_empty_edited_side(self):
        paper = make_pair(0, 4, 2, 0, 0, edge_rule="paper")
        assert paper.precision == 0.0
        assert paper.recall == 0.5
        vacuous = make_pair(0, 4, 2, 0, 0, edge_rule="vacuous")
        assert vacuous.precision == 1.0

    def test_unknown_edge_rule(self):
        with pytest.raises(FactCheckError):
            make_pair(0, 1, 1, 1, 1, edge_rule="generous")

    def test_count_bounds_validated(self):
        with pytest.raises(FactCheckError):
            make_pair(0, 2, 3, 1, 0)
        with pytest.raises(FactCheckError):
            make_pair(0, 2, 1, 1, 2)

    def test_record_round_trip(self):
        pair = make_pair(7, 4, 3, 5, 4)
        record = pair.to_record()
        assert record["n_new"] == 1
        assert PairFactReport.from_record(record) == pair


class TestScorePair:
    def fact_set(self, facts, exchange_id="e1", provenance="physician"):
        return AtomicFactSet(
            exchange_id=exchange_id, provenance=provenance, facts=tuple(facts),
            extraction_model="m", raw_reply="raw",
        )

    def verdicts(self, facts, flags):
        return [
            EntailmentVerdict(hypothesis=f, prediction=int(flag), parse_failed=False, raw_reply="")
            for f, flag in zip(facts, flags)
        ]

    def test_counting(self):
        original = self.fact_set(["o1", "o2", "o3"])
        edited = self.fact_set(["e1", "e2"], provenance="edited_simple")
        report = score_pair(
            original,
            edited,
            self.verdicts(original.facts, [1, 0, 1]),
            self.verdicts(edited.facts, [1, 1]),
        )
        assert (report.n_original, report.n_preserved) == (3, 2)
        assert (report.n_edited, report.n_grounded) == (2, 2)
        assert report.recall == pytest.approx(2 / 3)
        assert report.precision == 1.0

    def test_verdict_coverage_enforced(self):
        original = self.fact_set(["o1", "o2"])
        edited = self.fact_set(["e1"], provenance="edited_simple")
        with pytest.raises(FactCheckError, match="recall verdicts"):
            score_pair(original, edited, self.verdicts(["o1"], [1]), self.verdicts(["e1"], [1]))
        with pytest.raises(FactCheckError, match="precision verdicts"):
            score_pair(
                original,
                edited,
                self.verdicts(["o1", "o2"], [1, 1]),
                self.verdicts(["other"], [1]),
            )

    def test_order_of_verdicts_enforced(self):
        original = self.fact_set(["o1", "o2"])
        edited = self.fact_set(["e1"], provenance="edited_simple")
        with pytest.raises(FactCheckError):
            score_pair(
                original,
                edited,
                self.verdicts(["o2", "o1"], [1, 1]),
                self.verdicts(["e1"], [1]),
            )

    def test_mismatched_ids(self):
        original = self.fact_set(["o1"])
        edited = self.fact_set(["e1"], exchange_id="e2", provenance="edited_simple")
        with pytest.raises(FactCheckError, match="mismatched"):
            score_pair(original, edited, self.verdicts(["o1"], [1]), self.verdicts(["e1"], [1]))


class TestEvaluatePair:
    def test_identity_edit_scores_perfect(self):
        exchange = make_corpus(1)[0]
        original = physician_variant(exchange)
        edited = ResponseVariant(
            exchange_id=exchange.exchange_id,
            provenance="edited_simple",
            text=exchange.physician_response,
            model_id="m",
        )
        gw = rules_gateway(
            [
                {"tag": "extract", "echo_after": "Note:"},
                {"tag": "entail", "entail_substring": True},
            ]
        )
        evaluation = evaluate_pair(
            gw, load_template("fact_extract"), load_template("entail"), "m", original, edited
        )
        assert evaluation.report.recall == 1.0
        assert evaluation.report.precision == 1.0
        assert evaluation.report.n_new == 0
        assert evaluation.n_parse_failures == 0

    def test_partial_preservation(self):
        original = ResponseVariant(
            exchange_id="e1", provenance="physician",
            text="Alpha fact. Beta fact.", model_id="human",
        )
        edited = ResponseVariant(
            exchange_id="e1", provenance="edited_simple",
            text="Alpha fact. Gamma fact.", model_id="m",
        )
        gw = rules_gateway(
            [
                {"tag": "extract", "match": "Note: Alpha fact. Beta fact.", "reply": "alpha // beta"},
                {"tag": "extract", "match": "Note: Alpha fact. Gamma fact.", "reply": "alpha // gamma"},
                {"tag": "entail", "entail_substring": True},
            ]
        )
        evaluation = evaluate_pair(
            gw, load_template("fact_extract"), load_template("entail"), "m", original, edited
        )
        report = evaluation.report
        assert (report.n_original, report.n_preserved) == (2, 1)
        assert (report.n_edited, report.n_grounded) == (2, 1)
        assert report.recall == 0.5
        assert report.precision == 0.5
        assert report.n_new == 1


class TestScoreCorpus:
    def test_pooled_totals_from_supplementary_flow(self):
        # Distribute the published flow totals over several pairs; the split
        # is arbitrary because micro metrics pool counts before dividing.
        pairs = [
            make_pair(0, 934 - 5 * 150, 855 - 5 * 140, 1194 - 5 * 190, 1081 - 5 * 172),
        ] + [make_pair(i + 1, 150, 140, 190, 172) for i in range(5)]
        report = score_corpus(pairs)
        assert report.flow == {
            "original": 934,
            "preserved": 855,
            "edited": 1194,
            "grounded": 1081,
            "new": 113,
        }
        assert report.micro_recall == pytest.approx(0.915, abs=0.001)
        assert report.micro_precision == pytest.approx(0.905, abs=0.001)
        assert 100.0 * report.loss_rate == pytest.approx(8.5, abs=0.1)
        assert 100.0 * report.hallucination_rate == pytest.approx(9.5, abs=0.1)

    def test_rates_are_exact_complements(self):
        pairs = [make_pair(i, 7, 5, 9, 6) for i in range(3)]
        report = score_corpus(pairs)
        assert report.loss_rate == 1.0 - report.micro_recall
        assert report.hallucination_rate == 1.0 - report.micro_precision

    def test_micro_equals_flat_concatenation(self):
        pairs = [
            make_pair(0, 10, 5, 10, 5),
            make_pair(1, 2, 2, 2, 2),
            make_pair(2, 0, 0, 3, 1),
            make_pair(3, 4, 0, 0, 0),
        ]
        report = score_corpus(pairs)
        recall, precision = flat_micro(pairs)
        assert report.micro_recall == recall
        assert report.micro_precision == precision

    def test_micro_differs_from_macro_on_skew(self):
        pairs = [make_pair(0, 10, 5, 10, 5), make_pair(1, 2, 2, 2, 2)]
        report = score_corpus(pairs)
        assert report.micro_recall == pytest.approx(7 / 12)
        assert report.macro_recall == pytest.approx(0.75)
        assert abs(report.micro_recall - report.macro_recall) > 1e-6

    def test_micro_equals_macro_on_uniform_sizes(self):
        pairs = [make_pair(i, 5, 3, 4, 2) for i in range(37)]
        report = score_corpus(pairs)
        assert report.micro_recall == pytest.approx(report.macro_recall, abs=1e-12)
        assert report.micro_precision == pytest.approx(report.macro_precision, abs=1e-12)

    def test_empty_pair_contributes_nothing_to_micro(self):
        base = [make_pair(0, 4, 3, 5, 4), make_pair(1, 6, 6, 2, 2)]
        with_empty = base + [make_pair(2, 0, 0, 0, 0)]
        assert score_corpus(with_empty).micro_recall == score_corpus(base).micro_recall
        assert score_corpus(with_empty).micro_precision == score_corpus(base).micro_precision

    def test_all_empty_pools(self):
        report = score_corpus([make_pair(0, 0, 0, 0, 0)])
        assert report.micro_recall == 1.0
        assert report.micro_precision == 1.0
        assert report.loss_rate == 0.0
        assert report.hallucination_rate == 0.0

    def test_f1_harmonic_mean(self):
        report = score_corpus([make_pair(0, 4, 2, 4, 4)])
        assert report.micro_f1 == pytest.approx(2 * 1.0 * 0.5 / 1.5)

    def test_fact_ratio_exclusions(self):
        pairs = [make_pair(0, 4, 4, 8, 8), make_pair(1, 0, 0, 3, 3)]
        report = score_corpus(pairs)
        assert report.fact_ratios == (2.0,)
        assert report.fact_ratio_excluded == 1

    def test_empty_corpus_rejected(self):
        with pytest.raises(FactCheckError):
            score_corpus([])

    def test_record_shape(self):
        record = score_corpus([make_pair(0, 4, 3, 5, 4)]).to_record()
        assert record["flow"]["new"] == 1
        assert isinstance(record["fact_ratios"], list)

    @given(st.lists(pair_counts, min_size=1, max_size=40))
    @settings(max_examples=150)
    def test_properties_on_random_corpora(self, raw):
        pairs = [
            make_pair(i, o, po, e, ge)
            for i, ((o, po), (e, ge)) in enumerate(raw)
        ]
        report = score_corpus(pairs)
        assert 0.0 <= report.micro_recall <= 1.0
        assert 0.0 <= report.micro_precision <= 1.0
        assert report.loss_rate == 1.0 - report.micro_recall
        assert report.hallucination_rate == 1.0 - report.micro_precision
        assert report.flow["new"] == report.flow["edited"] - report.flow["grounded"]
        assert report.flow["new"] >= 0

        recall, precision = flat_micro(pairs)
        assert report.micro_recall == recall
        assert report.micro_precision == precision

        shuffled = list(pairs)
        random.Random(0).shuffle(shuffled)
        permuted = score_corpus(shuffled)
        assert permuted.micro_recall == report.micro_recall
        assert permuted.micro_precision == report.micro_precision
        assert permuted.macro_recall == pytest.approx(report.macro_recall, abs=1e-12)

    @given(
        counts=count_pairs,
        counts2=count_pairs,
        n=st.integers(min_value=1, max_value=30),
    )
    @settings(max_examples=100)
    def test_uniform_micro_macro_collapse(self, counts, counts2, n):
        # Uniform nonempty fact sets: pooling and per-pair averaging agree.
        # Empty sets are excluded because the per-pair edge rule scores them
        # 0.0 while they vanish from the pooled denominator.
        o, po = counts
        e, ge = counts2
        pairs = [make_pair(i, o + 1, po, e + 1, ge) for i in range(n)]
        report = score_corpus(pairs)
        assert report.micro_recall == pytest.approx(report.macro_recall, abs=1e-12)
        assert report.micro_precision == pytest.approx(report.macro_precision, abs=1e-12)

    def test_uniform_empty_side_is_the_documented_divergence(self):
        # Under the paper edge rule an empty edited set scores per-pair
        # precision 0.0, yet contributes nothing to the pooled denominator,
        # so micro and macro legitimately part ways here.
        pairs = [make_pair(i, 1, 0, 0, 0) for i in range(4)]
        report = score_corpus(pairs)
        assert report.macro_precision == 0.0
        assert report.micro_precision == 1.0


class TestFactRatioAnalysis:
    def test_band_grouping_against_oracle(self):
        rng = random.Random(42)
        pairs = []
        chars = {}
        for i in range(30):
            n_original = rng.randint(0, 8)
            n_edited = rng.randint(0, 8)
            pairs.append(
                make_pair(
                    i,
                    n_original,
                    rng.randint(0, n_original),
                    n_edited,
                    rng.randint(0, n_edited),
                )
            )
            chars[pairs[-1].exchange_id] = rng.randint(50, 800)

        analysis = fact_ratio_analysis(pairs, chars, edges=(231, 393))

        groups: dict[str, list[PairFactReport]] = {"short": [], "medium": [], "long": []}
        for p in pairs:
            c = chars[p.exchange_id]
            band = "short" if c < 231 else ("long" if c > 393 else "medium")
            groups[band].append(p)

        for band, members in groups.items():
            entry = analysis["bands"][band]
            assert entry["n_pairs"] == len(members)
            if not members:
                continue
            precisions = [p.precision for p in members]
            assert entry["precision"]["mean"] == pytest.approx(fmean(precisions))
            assert entry["precision"]["median"] == pytest.approx(
                linear_percentile(precisions, 0.5)
            )
            assert entry["precision"]["q1"] == pytest.approx(
                linear_percentile(precisions, 0.25)
            )
            assert entry["precision"]["q3"] == pytest.approx(
                linear_percentile(precisions, 0.75)
            )
            ratios = [p.n_edited / p.n_original for p in members if p.n_original > 0]
            assert entry["ratio_excluded"] == len(members) - len(ratios)
            if ratios:
                assert entry["fact_ratio"]["mean"] == pytest.approx(fmean(ratios))
            else:
                assert entry["fact_ratio"] is None

    def test_missing_length_rejected(self):
        with pytest.raises(FactCheckError):
            fact_ratio_analysis([make_pair(0, 1, 1, 1, 1)], {})

    def test_edges_recorded(self):
        out = fact_ratio_analysis([make_pair(0, 1, 1, 1, 1)], {"ex0000": 100}, edges=(10, 20))
        assert out["edges"] == {"lower": 10, "upper": 20}


class TestEmpathyLevelSweep:
    def sweep_gateway(self):
        base = "Plain base advice for the ankle."
        one_extra = base + " Try the invented ointment."
        two_extra = one_extra + " Also invented bed rest."
        return rules_gateway(
            [
                {"tag": "edit", "match": "extremely empathetic", "reply": two_extra},
                {"tag": "edit", "match": "highly empathetic", "reply": one_extra},
                {"tag": "edit", "reply": base},
                {"tag": "extract", "match": f"Note: {two_extra}", "reply": "base advice // ointment // bed rest"},
                {"tag": "extract", "match": f"Note: {one_extra}", "reply": "base advice // ointment"},
                {"tag": "extract", "reply": "base advice"},
                {"tag": "entail", "entail_substring": True},
            ]
        )

    def exchange(self):
        from emfact.corpus import QAExchange

        return QAExchange("s1", "My ankle hurts, what should I do?", "Plain base advice for the ankle.")

    def test_precision_decreases_with_intensity(self):
        sweep = empathy_level_sweep(
            self.sweep_gateway(),
            load_template("simple_edit"),
            load_template("fact_extract"),
            load_template("entail"),
            [self.exchange()],
            edit_model="edit-m",
            check_model="check-m",
        )
        assert list(sweep) == ["standard", "high", "extreme"]
        precisions = [sweep[level]["corpus"]["micro_precision"] for level in sweep]
        assert precisions == [1.0, 0.5, pytest.approx(1 / 3)]
        ratios = [sweep[level]["mean_fact_ratio"] for level in sweep]
        assert ratios == [1.0, 2.0, 3.0]
        recalls = [sweep[level]["corpus"]["micro_recall"] for level in sweep]
        assert recalls == [1.0, 1.0, 1.0]

    def test_unknown_level_rejected(self):
        with pytest.raises(FactCheckError):
            empathy_level_sweep(
                self.sweep_gateway(),
                load_template("simple_edit"),
                load_template("fact_extract"),
                load_template("entail"),
                [self.exchange()],
                edit_model="m",
                check_model="m",
                levels=["standard", "ultra"],
            )


class TestValidationTallies:
    def rows(self, direction, flagged, confirmed):
        return [
            {"direction": direction, "fact": f"f{i}", "confirmed": i < confirmed}
            for i in range(flagged)
        ]

    def test_supplementary_values(self):
        rows = self.rows("added", 262, 219) + self.rows("not_preserved", 191, 139)
        tallies = validation_tallies(rows)
        assert tallies["added"]["flagged"] == 262
        assert tallies["added"]["confirmed"] == 219
        assert tallies["added"]["precision_percent"] == 83.6
        assert tallies["not_preserved"]["flagged"] == 191
        assert tallies["not_preserved"]["confirmed"] == 139
        # 139/191 = 72.77%, which rounds to 72.8.
        assert tallies["not_preserved"]["precision_percent"] == pytest.approx(72.7, abs=0.1)

    def test_empty_direction_has_no_precision(self):
        tallies = validation_tallies(self.rows("added", 3, 2))
        assert tallies["not_preserved"] == {
            "flagged": 0,
            "confirmed": 0,
            "precision_percent": None,
        }

    def test_unknown_direction_rejected(self):
        with pytest.raises(FactCheckError):
            validation_tallies([{"direction": "sideways", "confirmed": True}])


class TestCategoryCoverage:
    PAPER_TABLE = {
        "Added follow-up recommendation": (13, 12, 92.3),
        "Clinical assumption/speculation": (7, 7, 100.0),
        "Clinical inaccuracy": (4, 3, 75.0),
        "Adds unnecessary advice": (4, 4, 100.0),
        "Adds unnecessary doubt/fear": (2, 2, 100.0),
        "False assurance": (2, 1, 50.0),
    }

    def fixture_rows(self):
        expert = []
        mapped = []
        serial = 0
        for category, (flagged, detected, _) in self.PAPER_TABLE.items():
            for i in range(flagged):
                response_id = f"r{serial}"
                serial += 1
                expert.append({"response_id": response_id, "category": category})
                if i < detected:
                    mapped.append({"response_id": response_id, "category": category})
        return expert, mapped

    def test_paper_table_reproduced(self):
        expert, mapped = self.fixture_rows()
        coverage = category_coverage(expert, mapped)
        for category, (flagged, detected, percent) in self.PAPER_TABLE.items():
            entry = coverage["categories"][category]
            assert entry["flagged"] == flagged
            assert entry["detected"] == detected
            assert entry["coverage_percent"] == percent
        assert coverage["overall"] == {
            "flagged": 32,
            "detected": 29,
            "coverage_percent": 90.62,
        }

    def test_detection_requires_same_response_and_category(self):
        expert = [{"response_id": "r1", "category": FABRICATION_CATEGORIES[0]}]
        mapped_wrong_cat = [{"response_id": "r1", "category": FABRICATION_CATEGORIES[1]}]
        coverage = category_coverage(expert, mapped_wrong_cat)
        assert coverage["overall"]["detected"] == 0

    def test_multiple_mapped_facts_count_once(self):
        category = FABRICATION_CATEGORIES[0]
        expert = [{"response_id": "r1", "category": category}]
        mapped = [{"response_id": "r1", "category": category}] * 3
        coverage = category_coverage(expert, mapped)
        assert coverage["categories"][category]["detected"] == 1

    def test_empty_category_has_no_percent(self):
        expert = [{"response_id": "r1", "category": FABRICATION_CATEGORIES[0]}]
        coverage = category_coverage(expert, [])
        assert coverage["categories"]["False assurance"]["coverage_percent"] is None

    def test_unknown_category_rejected(self):
        with pytest.raises(FactCheckError):
            category_coverage([{"response_id": "r1", "category": "Made up"}], [])
