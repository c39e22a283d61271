"""Three-way empathy comparison between two responses to the same question.

A judge model sees the question and both responses and picks response 1,
response 2, or a tie. Position bias is removed by asking twice with the
responses swapped and reconciling the two verdicts: agreement stands, a
confident verdict beats an unclassifiable one, and a conflict between two
confident verdicts collapses to a tie. Several judges combine by plurality
vote. Agreement with human annotators is exact-match label accuracy.
"""

from __future__ import annotations

import logging
from collections import Counter
from dataclasses import dataclass
from typing import Iterable, Mapping, Sequence

from .corpus import QAExchange
from .editor import ResponseVariant
from .gateway import ChatRequest, Gateway
from .prompts import PromptTemplate, render

logger = logging.getLogger(__name__)

A_MORE = "a_more"
B_MORE = "b_more"
EQUAL = "equal"
UNCLASSIFIED = "unclassified"
LABELS = (A_MORE, B_MORE, EQUAL, UNCLASSIFIED)

# Raw verdicts in prompt order, before mapping back to the a/b identities.
_R1 = "r1"
_R2 = "r2"


@dataclass(frozen=True)
class PairJudgment:
    exchange_id: str
    provenance_a: str
    provenance_b: str
    judge_model: str
    label: str
    forward_label: str
    reverse_label: str
    forward_reply: str
    reverse_reply: str

    def to_record(self) -> dict:
        return {
            "exchange_id": self.exchange_id,
            "provenance_a": self.provenance_a,
            "provenance_b": self.provenance_b,
            "judge_model": self.judge_model,
            "label": self.label,
            "forward_label": self.forward_label,
            "reverse_label": self.reverse_label,
            "forward_reply": self.forward_reply,
            "reverse_reply": self.reverse_reply,
        }

    @classmethod
    def from_record(cls, record: dict) -> "PairJudgment":
        return cls(**{k: record[k] for k in (
            "exchange_id", "provenance_a", "provenance_b", "judge_model",
            "label", "forward_label", "reverse_label", "forward_reply", "reverse_reply",
        )})


def parse_verdict(reply: str) -> str | None:
    """Map a judge reply to r1/r2/equal, or None when ambiguous.

    Naming exactly one numbered response wins; otherwise tie language
    ('equal', 'equally', or the phrase 'both responses') means a tie. A bare
    'both' is not enough: 'they're both fine I guess' stays ambiguous.
    """
    lowered = reply.casefold()
    has_r1 = "response 1" in lowered
    has_r2 = "response 2" in lowered
    if has_r1 and not has_r2:
        return _R1
    if has_r2 and not has_r1:
        return _R2
    if "equal" in lowered or "both responses" in lowered:
        return EQUAL
    return None


def _judge_once(
    gateway: Gateway,
    template: PromptTemplate,
    model_id: str,
    question: str,
    first: str,
    second: str,
) -> tuple[str, str]:
    """One judging call; ambiguous replies get one cache-bypassing retry."""
    prompt = render(template, {"PQ": question, "R1": first, "R2": second})
    req = ChatRequest.user(model_id, prompt, tag="rank")
    result = gateway.complete(req)
    verdict = parse_verdict(result.text)
    if verdict is None:
        result = gateway.complete(req, use_cache=False)
        verdict = parse_verdict(result.text)
    return verdict or UNCLASSIFIED, result.text


def _orient(verdict: str, a_was_first: bool) -> str:
    if verdict == _R1:
        return A_MORE if a_was_first else B_MORE
    if verdict == _R2:
        return B_MORE if a_was_first else A_MORE
    return verdict  # equal / unclassified carry no position


def combine_orders(forward: str, reverse: str) -> str:
    """Reconcile the two presentation orders into one label.

    Agreement (including double-unclassified) stands; one unclassifiable
    side defers to the other; two confident verdicts that disagree, in any
    combination, collapse to a tie.
    """
    for label in (forward, reverse):
        if label not in LABELS:
            raise ValueError(f"unknown label {label!r}")
    if forward == reverse:
        return forward
    if forward == UNCLASSIFIED:
        return reverse
    if reverse == UNCLASSIFIED:
        return forward
    return EQUAL


def compare_debiased(
    gateway: Gateway,
    template: PromptTemplate,
    model_id: str,
    question: str,
    text_a: str,
    text_b: str,
) -> tuple[str, str, str, str, str]:
    """Judge a pair in both presentation orders and reconcile.

    Returns (label, forward_label, reverse_label, forward_reply,
    reverse_reply) where forward showed text_a first.
    """
    fwd_verdict, fwd_reply = _judge_once(gateway, template, model_id, question, text_a, text_b)
    rev_verdict, rev_reply = _judge_once(gateway, template, model_id, question, text_b, text_a)
    forward = _orient(fwd_verdict, a_was_first=True)
    reverse = _orient(rev_verdict, a_was_first=False)
    return combine_orders(forward, reverse), forward, reverse, fwd_reply, rev_reply


def judge_variant_pair(
    gateway: Gateway,
    template: PromptTemplate,
    model_id: str,
    exchange: QAExchange,
    variant_a: ResponseVariant,
    variant_b: ResponseVariant,
) -> PairJudgment:
    if not (exchange.exchange_id == variant_a.exchange_id == variant_b.exchange_id):
        raise ValueError(
            f"mismatched exchange ids: {exchange.exchange_id!r}, "
            f"{variant_a.exchange_id!r}, {variant_b.exchange_id!r}"
        )
    label, forward, reverse, fwd_reply, rev_reply = compare_debiased(
        gateway, template, model_id, exchange.patient_question, variant_a.text, variant_b.text
    )
    return PairJudgment(
        exchange_id=exchange.exchange_id,
        provenance_a=variant_a.provenance,
        provenance_b=variant_b.provenance,
        judge_model=model_id,
        label=label,
        forward_label=forward,
        reverse_label=reverse,
        forward_reply=fwd_reply,
        reverse_reply=rev_reply,
    )


def ensemble_label(labels: Sequence[str]) -> str:
    """Plurality vote over confident labels; ties break to equal; a panel
    with no confident vote is unclassified."""
    confident = [l for l in labels if l != UNCLASSIFIED]
    if not confident:
        return UNCLASSIFIED
    counts = Counter(confident)
    top = max(counts.values())
    winners = [label for label, n in counts.items() if n == top]
    return winners[0] if len(winners) == 1 else EQUAL


def summarize_labels(labels: Sequence[str]) -> dict:
    """Counts plus one-decimal percentages of the total for each label."""
    if not labels:
        raise ValueError("cannot summarize an empty label list")
    counts = Counter(labels)
    unknown = set(counts) - set(LABELS)
    if unknown:
        raise ValueError(f"unknown label(s): {sorted(unknown)}")
    total = len(labels)
    return {
        "total": total,
        "counts": {label: counts.get(label, 0) for label in LABELS},
        "percentages": {
            label: round(100.0 * counts.get(label, 0) / total, 1) for label in LABELS
        },
    }


def aggregate_human_labels(rows: Iterable[Mapping]) -> dict[str, str]:
    """Majority label per exchange over annotator rows; ties become equal."""
    by_item: dict[str, Counter] = {}
    for row in rows:
        label = row["label"]
        if label not in LABELS:
            raise ValueError(f"unknown label {label!r} for exchange {row['exchange_id']!r}")
        by_item.setdefault(row["exchange_id"], Counter())[label] += 1
    aggregated: dict[str, str] = {}
    for exchange_id, counts in by_item.items():
        top = max(counts.values())
        winners = [label for label, n in counts.items() if n == top]
        aggregated[exchange_id] = winners[0] if len(winners) == 1 else EQUAL
    return aggregated


@dataclass(frozen=True)
class AlignmentResult:
    matched: int
    total: int

    @property
    def score(self) -> float:
        return self.matched / self.total

    def to_record(self) -> dict:
        return {"matched": self.matched, "total": self.total, "score": self.score}


def alignment_score(
    predicted: Mapping[str, str], reference: Mapping[str, str]
) -> AlignmentResult:
    """Exact-match agreement on the items both sides labeled."""
    common = sorted(set(predicted) & set(reference))
    if not common:
        raise ValueError("no overlapping exchange ids between predictions and reference")
    matched = sum(1 for item in common if predicted[item] == reference[item])
    return AlignmentResult(matched=matched, total=len(common))
