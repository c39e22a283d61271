"""Shared fixtures: synthetic corpora, scripted backends, template access."""

from __future__ import annotations

import math

import pytest

from emfact.corpus import QAExchange
from emfact.gateway import Gateway, MockBackend, MockRule, ResponseCache
from emfact.prompts import load_all_templates

# Question openers cycled through the synthetic corpus.  None of them may
# trip the decomposition meta-filters or the reply cleaner (no leading
# quotes, no colon-terminated first lines, no "//").
_TOPICS = (
    "a persistent cough after a cold",
    "mild swelling around the left ankle",
    "an itchy rash on both forearms",
    "occasional dizziness when standing up",
    "a dull headache behind the eyes",
    "trouble sleeping through the night",
    "a sore throat that lingers in the morning",
    "tingling in the fingertips after typing",
    "heartburn after late dinners",
    "lower back stiffness after long drives",
    "dry eyes during screen work",
    "cramping in the calves overnight",
)

_REMEDIES = (
    "rest and regular fluids",
    "a warm compress twice a day",
    "an over-the-counter antihistamine",
    "rising slowly and staying hydrated",
    "short breaks away from bright light",
    "a consistent bedtime routine",
    "warm salt-water gargles",
    "gentle wrist stretches every hour",
    "smaller meals earlier in the evening",
    "light walking and posture changes",
    "lubricating drops and screen breaks",
    "stretching before bed and more potassium",
)


def make_corpus(n: int = 12, general_every: int | None = None) -> list[QAExchange]:
    """Build ``n`` deterministic exchanges.

    When ``general_every`` is set, every k-th question carries the phrase
    "in general", giving a scripted classifier something to match on.
    """
    out: list[QAExchange] = []
    for i in range(n):
        topic = _TOPICS[i % len(_TOPICS)]
        remedy = _REMEDIES[i % len(_REMEDIES)]
        suffix = " Should I worry about this in general?" if (
            general_every and i % general_every == 0
        ) else " Should I get this checked out?"
        question = f"I have been dealing with {topic} for about {i + 1} days.{suffix}"
        response = (
            f"Thank you for reaching out about {topic}. "
            f"Based on what you describe, {remedy} usually helps, "
            f"and case {i} should improve within a week."
        )
        out.append(
            QAExchange(
                exchange_id=f"ex{i:04d}",
                patient_question=question,
                physician_response=response,
            )
        )
    return out


# Scripted rules that make every pipeline stage an identity transform:
# edits echo the physician response, decomposition yields the whole text
# as one fact, and entailment checks literal containment.
IDENTITY_RULES = [
    {"tag": "classify", "match": "in general", "reply": "GENERAL"},
    {"tag": "classify", "reply": "EHR"},
    {"tag": "edit", "echo_after": "Physician's response:"},
    {"tag": "generate", "echo_after": "Patient Question:"},
    {"tag": "rank", "reply": "Both responses are equally empathetic"},
    {"tag": "extract", "echo_after": "Note:"},
    {"tag": "entail", "entail_substring": True},
]


def rules_gateway(
    rules: list[dict],
    cache_dir=None,
    parallelism: int = 1,
) -> Gateway:
    """Gateway over an in-memory scripted backend."""
    backend = MockBackend([MockRule(**r) for r in rules])
    cache = ResponseCache(cache_dir) if cache_dir is not None else None
    return Gateway(backend, cache=cache, parallelism=parallelism)


def linear_percentile(values: list[float], q: float) -> float:
    """Reference quantile: linear interpolation between closest ranks."""
    xs = sorted(values)
    pos = (len(xs) - 1) * q
    lo = math.floor(pos)
    hi = math.ceil(pos)
    if lo == hi:
        return float(xs[lo])
    frac = pos - lo
    return xs[lo] * (1 - frac) + xs[hi] * frac


@pytest.fixture(scope="session")
def templates():
    return load_all_templates()


@pytest.fixture()
def identity_gateway() -> Gateway:
    return rules_gateway(IDENTITY_RULES)
