"""Bidirectional factual-consistency scoring between an original response
and its edited counterpart.

Both texts decompose into atomic medical facts. Fact recall checks each
original fact against the edited text (was it preserved); fact precision
checks each edited fact against the original text (is it grounded). Micro
averages pool fact counts across the corpus, macro averages the per-pair
metrics. The flow totals {original, preserved, edited, grounded, new} carry
the loss rate (1 - micro recall) and hallucination rate (1 - micro
precision) as exact complements.
"""

from __future__ import annotations

import json
import logging
import re
from dataclasses import dataclass
from statistics import fmean
from typing import Iterable, Mapping, Sequence

import numpy as np

from .corpus import DEFAULT_BAND_EDGES, QAExchange, length_band
from .editor import ResponseVariant, edited_variant, physician_variant
from .gateway import ChatRequest, Gateway
from .prompts import EMPATHY_LEVELS, PromptTemplate, render

logger = logging.getLogger(__name__)

FACT_DELIMITER = "//"

# How a metric with an empty denominator set scores. "paper": 0.0 unless both
# sets are empty (then both metrics are 1.0). "vacuous": an empty hypothesis
# set is vacuously satisfied, so the metric is 1.0.
EDGE_RULES = ("paper", "vacuous")

# Expert fabrication patterns used by category_coverage.
FABRICATION_CATEGORIES = (
    "Added follow-up recommendation",
    "Clinical assumption/speculation",
    "Clinical inaccuracy",
    "Adds unnecessary advice",
    "Adds unnecessary doubt/fear",
    "False assurance",
)

# Directions a human-validated flag can come from: an original fact flagged
# as not preserved (recall side) or an edited fact flagged as added
# (precision side).
FLAG_DIRECTIONS = ("not_preserved", "added")


class FactCheckError(ValueError):
    """Inconsistent counts, verdict coverage gaps, or unknown names."""


@dataclass(frozen=True)
class AtomicFactSet:
    exchange_id: str
    provenance: str
    facts: tuple[str, ...]
    extraction_model: str
    raw_reply: str
    warning: bool = False

    def __post_init__(self) -> None:
        for fact in self.facts:
            if not fact.strip():
                raise FactCheckError("facts must be nonempty trimmed strings")
            if FACT_DELIMITER in fact:
                raise FactCheckError(f"fact contains the delimiter: {fact!r}")

    def to_record(self) -> dict:
        return {
            "exchange_id": self.exchange_id,
            "provenance": self.provenance,
            "facts": list(self.facts),
            "extraction_model": self.extraction_model,
            "raw_reply": self.raw_reply,
            "warning": self.warning,
        }


@dataclass(frozen=True)
class EntailmentVerdict:
    hypothesis: str
    prediction: int
    parse_failed: bool
    raw_reply: str

    def __post_init__(self) -> None:
        if self.prediction not in (0, 1):
            raise FactCheckError(f"prediction must be 0 or 1, got {self.prediction!r}")


@dataclass(frozen=True)
class PairFactReport:
    exchange_id: str
    n_original: int
    n_preserved: int
    n_edited: int
    n_grounded: int
    recall: float
    precision: float

    def __post_init__(self) -> None:
        if not 0 <= self.n_preserved <= self.n_original:
            raise FactCheckError(
                f"{self.exchange_id}: preserved {self.n_preserved} outside [0, {self.n_original}]"
            )
        if not 0 <= self.n_grounded <= self.n_edited:
            raise FactCheckError(
                f"{self.exchange_id}: grounded {self.n_grounded} outside [0, {self.n_edited}]"
            )
        if not (0.0 <= self.recall <= 1.0 and 0.0 <= self.precision <= 1.0):
            raise FactCheckError(f"{self.exchange_id}: metric outside [0, 1]")

    @property
    def n_new(self) -> int:
        return self.n_edited - self.n_grounded

    @classmethod
    def from_counts(
        cls,
        exchange_id: str,
        n_original: int,
        n_preserved: int,
        n_edited: int,
        n_grounded: int,
        edge_rule: str = "paper",
    ) -> "PairFactReport":
        if edge_rule not in EDGE_RULES:
            raise FactCheckError(f"unknown edge rule {edge_rule!r} (expected one of {EDGE_RULES})")
        empty_value = 1.0 if edge_rule == "vacuous" else 0.0
        if n_original == 0 and n_edited == 0:
            recall = precision = 1.0
        else:
            recall = n_preserved / n_original if n_original else empty_value
            precision = n_grounded / n_edited if n_edited else empty_value
        return cls(
            exchange_id=exchange_id,
            n_original=n_original,
            n_preserved=n_preserved,
            n_edited=n_edited,
            n_grounded=n_grounded,
            recall=recall,
            precision=precision,
        )

    def to_record(self) -> dict:
        return {
            "exchange_id": self.exchange_id,
            "n_original": self.n_original,
            "n_preserved": self.n_preserved,
            "n_edited": self.n_edited,
            "n_grounded": self.n_grounded,
            "n_new": self.n_new,
            "recall": self.recall,
            "precision": self.precision,
        }

    @classmethod
    def from_record(cls, record: dict) -> "PairFactReport":
        return cls(**{k: record[k] for k in (
            "exchange_id", "n_original", "n_preserved", "n_edited", "n_grounded",
            "recall", "precision",
        )})


_WS_RE = re.compile(r"\s+")
_FACT_LABEL_RE = re.compile(
    r"^\s*(?:the\s+)?atomic\s+(?:medical\s+)?facts?(?:\s+are)?\s*:\s*", re.IGNORECASE
)
# Pieces that are meta commentary rather than facts. Matched per piece after
# splitting; a nonempty reply whose pieces all vanish sets the warning flag.
_META_PIECE_RES = (
    re.compile(r"^here (?:are|is)\b", re.IGNORECASE),
    re.compile(r"^(?:none|n/?a)\.?$", re.IGNORECASE),
    re.compile(r"\bi (?:cannot|can't|am unable|am sorry)\b", re.IGNORECASE),
    re.compile(r"\bas an ai\b", re.IGNORECASE),
    re.compile(r"\batomic facts?\b", re.IGNORECASE),
)


def _normalize_fact(fact: str) -> str:
    return _WS_RE.sub(" ", fact).strip().casefold()


def split_facts(reply: str, dedup: bool = True) -> tuple[str, ...]:
    """Split a decomposition reply into trimmed facts.

    Deduplication (casefold + whitespace collapse, first occurrence kept) is
    on by default; dedup=False exists for sensitivity analysis of the raw
    counts.
    """
    body = _FACT_LABEL_RE.sub("", reply.strip(), count=1)
    facts: list[str] = []
    seen: set[str] = set()
    for piece in body.split(FACT_DELIMITER):
        fact = piece.strip()
        if not fact:
            continue
        if any(pattern.search(fact) for pattern in _META_PIECE_RES):
            continue
        if dedup:
            key = _normalize_fact(fact)
            if key in seen:
                continue
            seen.add(key)
        facts.append(fact)
    return tuple(facts)


def decompose(
    gateway: Gateway,
    template: PromptTemplate,
    variant: ResponseVariant,
    extraction_model: str,
    dedup: bool = True,
) -> AtomicFactSet:
    """Extract the atomic medical facts of one response variant."""
    if not variant.text.strip():
        raise FactCheckError(f"exchange {variant.exchange_id!r}: empty variant text")
    prompt = render(template, {"text": variant.text})
    result = gateway.complete(ChatRequest.user(extraction_model, prompt, tag="extract"))
    facts = split_facts(result.text, dedup=dedup)
    warning = bool(result.text.strip()) and not facts
    if warning:
        logger.warning(
            "decomposition of %s/%s produced no facts from a nonempty reply",
            variant.exchange_id,
            variant.provenance,
        )
    return AtomicFactSet(
        exchange_id=variant.exchange_id,
        provenance=variant.provenance,
        facts=facts,
        extraction_model=extraction_model,
        raw_reply=result.text,
        warning=warning,
    )


_FENCED_JSON_RE = re.compile(r"```(?:json)?\s*\n(.*?)```", re.DOTALL | re.IGNORECASE)
_FLAT_OBJECT_RE = re.compile(r"\{[^{}]*\}", re.DOTALL)


def parse_entailment_reply(reply: str) -> int | None:
    """Pull the binary entailment_prediction out of a model reply.

    Accepts a bare JSON object, a fenced block, or an object embedded in
    prose; returns None when nothing parseable is present.
    """
    candidates = [reply.strip()]
    fenced = _FENCED_JSON_RE.search(reply)
    if fenced:
        candidates.append(fenced.group(1).strip())
    candidates.extend(m.group(0) for m in _FLAT_OBJECT_RE.finditer(reply))
    for candidate in candidates:
        try:
            payload = json.loads(candidate)
        except json.JSONDecodeError:
            continue
        if not isinstance(payload, dict) or "entailment_prediction" not in payload:
            continue
        value = payload["entailment_prediction"]
        if isinstance(value, bool):
            return int(value)
        if value in (0, 1):
            return int(value)
        if value in ("0", "1"):
            return int(value)
    return None


def check_entailment(
    gateway: Gateway,
    template: PromptTemplate,
    model_id: str,
    premise: str,
    hypothesis: str,
) -> EntailmentVerdict:
    """Binary entailment of one hypothesis against one premise.

    An unparseable reply gets one cache-bypassing retry; if that also fails
    the verdict is 0 with parse_failed set, so unverifiable claims never
    count as entailed.
    """
    if not premise.strip() or not hypothesis.strip():
        raise FactCheckError("premise and hypothesis must be nonempty")
    prompt = render(template, {"premise": premise, "hypothesis": hypothesis})
    req = ChatRequest.user(model_id, prompt, tag="entail")
    result = gateway.complete(req)
    prediction = parse_entailment_reply(result.text)
    if prediction is None:
        result = gateway.complete(req, use_cache=False)
        prediction = parse_entailment_reply(result.text)
    if prediction is None:
        return EntailmentVerdict(
            hypothesis=hypothesis, prediction=0, parse_failed=True, raw_reply=result.text
        )
    return EntailmentVerdict(
        hypothesis=hypothesis, prediction=prediction, parse_failed=False, raw_reply=result.text
    )


def check_entailments(
    gateway: Gateway,
    template: PromptTemplate,
    model_id: str,
    premise: str,
    hypotheses: Sequence[str],
) -> tuple[EntailmentVerdict, ...]:
    """Fan one premise against many hypotheses through the gateway.

    The first pass goes out as one parallel batch; only unparseable replies
    fall back to the per-call retry path. Verdicts come back in hypothesis
    order.
    """
    if not hypotheses:
        return ()
    requests = [
        ChatRequest.user(
            model_id, render(template, {"premise": premise, "hypothesis": h}), tag="entail"
        )
        for h in hypotheses
    ]
    results = gateway.complete_many(requests)
    verdicts: list[EntailmentVerdict] = []
    for hypothesis, req, result in zip(hypotheses, requests, results):
        prediction = parse_entailment_reply(result.text)
        if prediction is None:
            result = gateway.complete(req, use_cache=False)
            prediction = parse_entailment_reply(result.text)
        verdicts.append(
            EntailmentVerdict(
                hypothesis=hypothesis,
                prediction=0 if prediction is None else prediction,
                parse_failed=prediction is None,
                raw_reply=result.text,
            )
        )
    return tuple(verdicts)


def score_pair(
    original_facts: AtomicFactSet,
    edited_facts: AtomicFactSet,
    recall_verdicts: Sequence[EntailmentVerdict],
    precision_verdicts: Sequence[EntailmentVerdict],
    edge_rule: str = "paper",
) -> PairFactReport:
    """Combine both verdict directions into one pair report.

    recall_verdicts judge the original facts against the edited text;
    precision_verdicts judge the edited facts against the original text.
    Every fact must have exactly one verdict in its direction.
    """
    if original_facts.exchange_id != edited_facts.exchange_id:
        raise FactCheckError(
            f"mismatched exchange ids: {original_facts.exchange_id!r} vs "
            f"{edited_facts.exchange_id!r}"
        )
    for name, facts, verdicts in (
        ("recall", original_facts.facts, recall_verdicts),
        ("precision", edited_facts.facts, precision_verdicts),
    ):
        got = [v.hypothesis for v in verdicts]
        if got != list(facts):
            raise FactCheckError(
                f"{original_facts.exchange_id}: {name} verdicts do not cover the "
                f"fact set ({len(got)} verdicts for {len(facts)} facts)"
            )
    return PairFactReport.from_counts(
        exchange_id=original_facts.exchange_id,
        n_original=len(original_facts.facts),
        n_preserved=sum(v.prediction for v in recall_verdicts),
        n_edited=len(edited_facts.facts),
        n_grounded=sum(v.prediction for v in precision_verdicts),
        edge_rule=edge_rule,
    )


@dataclass(frozen=True)
class PairEvaluation:
    report: PairFactReport
    original_facts: AtomicFactSet
    edited_facts: AtomicFactSet
    recall_verdicts: tuple[EntailmentVerdict, ...]
    precision_verdicts: tuple[EntailmentVerdict, ...]

    @property
    def n_parse_failures(self) -> int:
        return sum(
            v.parse_failed for v in self.recall_verdicts + self.precision_verdicts
        )


def evaluate_pair(
    gateway: Gateway,
    extract_template: PromptTemplate,
    entail_template: PromptTemplate,
    model_id: str,
    original: ResponseVariant,
    edited: ResponseVariant,
    edge_rule: str = "paper",
    dedup: bool = True,
) -> PairEvaluation:
    """Full pipeline for one original/edited pair: decompose both sides,
    run both entailment directions, score."""
    original_facts = decompose(gateway, extract_template, original, model_id, dedup=dedup)
    edited_facts = decompose(gateway, extract_template, edited, model_id, dedup=dedup)
    recall_verdicts = check_entailments(
        gateway, entail_template, model_id, edited.text, original_facts.facts
    )
    precision_verdicts = check_entailments(
        gateway, entail_template, model_id, original.text, edited_facts.facts
    )
    report = score_pair(
        original_facts, edited_facts, recall_verdicts, precision_verdicts, edge_rule
    )
    return PairEvaluation(
        report=report,
        original_facts=original_facts,
        edited_facts=edited_facts,
        recall_verdicts=recall_verdicts,
        precision_verdicts=precision_verdicts,
    )


def _f1(precision: float, recall: float) -> float:
    if precision + recall == 0.0:
        return 0.0
    return 2.0 * precision * recall / (precision + recall)


@dataclass(frozen=True)
class CorpusFactReport:
    n_pairs: int
    micro_recall: float
    micro_precision: float
    micro_f1: float
    macro_recall: float
    macro_precision: float
    macro_f1: float
    flow: dict
    loss_rate: float
    hallucination_rate: float
    fact_ratios: tuple[float, ...]
    fact_ratio_excluded: int

    def to_record(self) -> dict:
        return {
            "n_pairs": self.n_pairs,
            "micro_recall": self.micro_recall,
            "micro_precision": self.micro_precision,
            "micro_f1": self.micro_f1,
            "macro_recall": self.macro_recall,
            "macro_precision": self.macro_precision,
            "macro_f1": self.macro_f1,
            "flow": dict(self.flow),
            "loss_rate": self.loss_rate,
            "hallucination_rate": self.hallucination_rate,
            "fact_ratios": list(self.fact_ratios),
            "fact_ratio_excluded": self.fact_ratio_excluded,
        }


def score_corpus(pairs: Sequence[PairFactReport]) -> CorpusFactReport:
    """Aggregate pair reports into corpus-level metrics.

    Micro metrics are ratios of pooled fact counts; pairs with an empty
    denominator set naturally contribute nothing to that metric. Should a
    pooled denominator itself be zero there was nothing to lose or invent,
    so the metric is 1.0 and its rate 0.0. The rates are computed as exact
    complements of the micro metrics.
    """
    if not pairs:
        raise FactCheckError("cannot score an empty pair list")
    original = sum(p.n_original for p in pairs)
    preserved = sum(p.n_preserved for p in pairs)
    edited = sum(p.n_edited for p in pairs)
    grounded = sum(p.n_grounded for p in pairs)
    micro_recall = preserved / original if original else 1.0
    micro_precision = grounded / edited if edited else 1.0
    macro_recall = fmean(p.recall for p in pairs)
    macro_precision = fmean(p.precision for p in pairs)
    ratios = tuple(p.n_edited / p.n_original for p in pairs if p.n_original > 0)
    return CorpusFactReport(
        n_pairs=len(pairs),
        micro_recall=micro_recall,
        micro_precision=micro_precision,
        micro_f1=_f1(micro_precision, micro_recall),
        macro_recall=macro_recall,
        macro_precision=macro_precision,
        macro_f1=_f1(macro_precision, macro_recall),
        flow={
            "original": original,
            "preserved": preserved,
            "edited": edited,
            "grounded": grounded,
            "new": edited - grounded,
        },
        loss_rate=1.0 - micro_recall,
        hallucination_rate=1.0 - micro_precision,
        fact_ratios=ratios,
        fact_ratio_excluded=sum(1 for p in pairs if p.n_original == 0),
    )


def _distribution(values: Sequence[float]) -> dict:
    arr = np.asarray(values, dtype=float)
    q1, median, q3 = np.quantile(arr, [0.25, 0.5, 0.75])
    return {
        "mean": float(arr.mean()),
        "median": float(median),
        "q1": float(q1),
        "q3": float(q3),
    }


def fact_ratio_analysis(
    pairs: Sequence[PairFactReport],
    response_chars: Mapping[str, int],
    edges: tuple[float, float] = DEFAULT_BAND_EDGES,
) -> dict:
    """Group pairs by original-response length band; per band report the
    distribution of pair precision and of the edited/original fact ratio.

    response_chars maps exchange_id to the character length of the original
    response. Pairs with n_original = 0 are excluded from the ratio
    distribution (and counted), never from the precision distribution.
    """
    bands: dict[str, list[PairFactReport]] = {"short": [], "medium": [], "long": []}
    for pair in pairs:
        if pair.exchange_id not in response_chars:
            raise FactCheckError(f"no response length for exchange {pair.exchange_id!r}")
        bands[length_band(response_chars[pair.exchange_id], edges)].append(pair)
    out: dict = {"edges": {"lower": edges[0], "upper": edges[1]}, "bands": {}}
    for band, members in bands.items():
        if not members:
            out["bands"][band] = {"n_pairs": 0}
            continue
        ratios = [p.n_edited / p.n_original for p in members if p.n_original > 0]
        entry = {
            "n_pairs": len(members),
            "precision": _distribution([p.precision for p in members]),
            "ratio_excluded": len(members) - len(ratios),
        }
        entry["fact_ratio"] = _distribution(ratios) if ratios else None
        out["bands"][band] = entry
    return out


def empathy_level_sweep(
    gateway: Gateway,
    edit_template: PromptTemplate,
    extract_template: PromptTemplate,
    entail_template: PromptTemplate,
    exchanges: Sequence[QAExchange],
    edit_model: str,
    check_model: str,
    levels: Sequence[str] = EMPATHY_LEVELS,
    edge_rule: str = "paper",
    dedup: bool = True,
) -> dict[str, dict]:
    """Edit every exchange at each empathy level and fact-check the result.

    Returns one entry per level with the corpus report, the per-pair
    reports, and the mean fact ratio, so the precision/intensity trade-off
    reads off directly.
    """
    out: dict[str, dict] = {}
    for level in levels:
        if level not in EMPATHY_LEVELS:
            raise FactCheckError(f"unknown empathy level {level!r}")
        evaluations = []
        for exchange in exchanges:
            original = physician_variant(exchange)
            edited = edited_variant(
                gateway, edit_template, exchange, edit_model, mode="simple", level=level
            )
            evaluations.append(
                evaluate_pair(
                    gateway, extract_template, entail_template, check_model,
                    original, edited, edge_rule, dedup=dedup,
                )
            )
        corpus_report = score_corpus([e.report for e in evaluations])
        out[level] = {
            "corpus": corpus_report.to_record(),
            "pairs": [e.report.to_record() for e in evaluations],
            "mean_fact_ratio": (
                fmean(corpus_report.fact_ratios) if corpus_report.fact_ratios else None
            ),
            "parse_failures": sum(e.n_parse_failures for e in evaluations),
        }
        logger.info(
            "level %s: micro_precision %.3f, mean fact ratio %s",
            level,
            corpus_report.micro_precision,
            out[level]["mean_fact_ratio"],
        )
    return out


def validation_tallies(rows: Iterable[Mapping]) -> dict:
    """Precision of automated flags against human review, per direction.

    Each row is one flagged fact: direction ('not_preserved' for original
    facts the pipeline called lost, 'added' for edited facts it called
    ungrounded) plus a boolean confirmed.
    """
    tallies = {d: {"flagged": 0, "confirmed": 0} for d in FLAG_DIRECTIONS}
    for row in rows:
        direction = row["direction"]
        if direction not in tallies:
            raise FactCheckError(
                f"unknown flag direction {direction!r} (expected one of {FLAG_DIRECTIONS})"
            )
        tallies[direction]["flagged"] += 1
        tallies[direction]["confirmed"] += bool(row["confirmed"])
    for entry in tallies.values():
        entry["precision_percent"] = (
            round(100.0 * entry["confirmed"] / entry["flagged"], 1)
            if entry["flagged"]
            else None
        )
    return tallies


def category_coverage(
    expert_flags: Iterable[Mapping],
    mapped_facts: Iterable[Mapping],
) -> dict:
    """Per-category coverage of expert-flagged fabrication instances.

    expert_flags rows are (response_id, category) instances flagged by the
    expert; mapped_facts rows are (response_id, category) assignments of
    extracted facts. An instance is covered when at least one extracted
    fact of the same response maps to the same category. Overall coverage
    is pooled over instances and rounded to two decimals.
    """
    def _category(row: Mapping) -> str:
        category = row["category"]
        if category not in FABRICATION_CATEGORIES:
            raise FactCheckError(f"unknown category {category!r}")
        return category

    flagged: set[tuple[str, str]] = {
        (str(row["response_id"]), _category(row)) for row in expert_flags
    }
    mapped: set[tuple[str, str]] = {
        (str(row["response_id"]), _category(row)) for row in mapped_facts
    }
    categories: dict = {}
    total_flagged = 0
    total_detected = 0
    for category in FABRICATION_CATEGORIES:
        instances = [pair for pair in flagged if pair[1] == category]
        detected = sum(1 for pair in instances if pair in mapped)
        total_flagged += len(instances)
        total_detected += detected
        categories[category] = {
            "flagged": len(instances),
            "detected": detected,
            "coverage_percent": (
                round(100.0 * detected / len(instances), 1) if instances else None
            ),
        }
    return {
        "categories": categories,
        "overall": {
            "flagged": total_flagged,
            "detected": total_detected,
            "coverage_percent": (
                round(100.0 * total_detected / total_flagged, 2) if total_flagged else None
            ),
        },
    }
