"""Response variants: the physician original, direct model answers, and
empathy-edited rewrites.

Each variant records its provenance so downstream stages can pair any two
variants of the same exchange without re-deriving where the text came from.
Model replies pass through a conservative cleanup (code fences, one pair of
wrapping quotes, a bare lead-in line ending with a colon) so judged text is
the answer itself rather than chat scaffolding.
"""

from __future__ import annotations

import logging
import re
from dataclasses import dataclass

from .corpus import QAExchange
from .gateway import ChatRequest, Gateway
from .prompts import EMPATHY_LEVELS, PromptTemplate, render

logger = logging.getLogger(__name__)

PROV_PHYSICIAN = "physician"
PROV_DIRECT = "direct_ai"
PROV_EDITED_SIMPLE = "edited_simple"
PROV_EDITED_REFINED = "edited_refined"

HUMAN_MODEL_ID = "human"

EDIT_MODES = ("simple", "refined")


class EditError(ValueError):
    """Variant generation failed (bad mode/level combination, empty reply)."""


@dataclass(frozen=True)
class ResponseVariant:
    exchange_id: str
    provenance: str
    text: str
    model_id: str
    template_name: str | None = None
    empathy_level: str | None = None

    def to_record(self) -> dict:
        return {
            "exchange_id": self.exchange_id,
            "provenance": self.provenance,
            "text": self.text,
            "model_id": self.model_id,
            "template_name": self.template_name,
            "empathy_level": self.empathy_level,
        }

    @classmethod
    def from_record(cls, record: dict) -> "ResponseVariant":
        return cls(
            exchange_id=record["exchange_id"],
            provenance=record["provenance"],
            text=record["text"],
            model_id=record["model_id"],
            template_name=record.get("template_name"),
            empathy_level=record.get("empathy_level"),
        )


def level_provenance(mode: str, level: str) -> str:
    """Provenance string for an edit. The empathy-level sweep is defined over
    the simple editing prompt, so levels beyond standard reject refined mode."""
    if mode not in EDIT_MODES:
        raise EditError(f"unknown edit mode {mode!r} (expected one of {EDIT_MODES})")
    if level not in EMPATHY_LEVELS:
        raise EditError(f"unknown empathy level {level!r} (expected one of {EMPATHY_LEVELS})")
    if level == "standard":
        return PROV_EDITED_SIMPLE if mode == "simple" else PROV_EDITED_REFINED
    if mode != "simple":
        raise EditError(f"empathy level {level!r} is only defined for simple mode")
    return f"edited_level:{level}"


_FENCE_RE = re.compile(r"^```[a-zA-Z0-9_-]*[ \t]*\n(.*?)\n?```$", re.DOTALL)
_QUOTE_PAIRS = (('"', '"'), ("'", "'"), ("“", "”"), ("‘", "’"))


def clean_reply(text: str) -> str:
    """Strip chat scaffolding from a model reply, conservatively.

    Removes, in order: outer whitespace, a first line that ends with a
    colon and has no sentence punctuation of its own (a lead-in like 'Here
    is the revised response:'), one wrapping code fence, and one pair of
    wrapping quotes. The lead-in goes first because fences and quotes
    usually wrap the body underneath it. Raises if nothing remains.
    """
    out = text.strip()
    first, sep, rest = out.partition("\n")
    if sep and first.strip().endswith(":") and not re.search(r"[.!?]", first[:-1]):
        out = rest.strip()
    fence = _FENCE_RE.match(out)
    if fence:
        out = fence.group(1).strip()
    for opening, closing in _QUOTE_PAIRS:
        if len(out) > 1 and out.startswith(opening) and out.endswith(closing):
            out = out[1:-1].strip()
            break
    out = out.strip()
    if not out:
        raise EditError("reply is empty after cleanup")
    return out


def physician_variant(exchange: QAExchange) -> ResponseVariant:
    return ResponseVariant(
        exchange_id=exchange.exchange_id,
        provenance=PROV_PHYSICIAN,
        text=exchange.physician_response,
        model_id=HUMAN_MODEL_ID,
    )


def direct_variant(
    gateway: Gateway,
    template: PromptTemplate,
    exchange: QAExchange,
    model_id: str,
    max_tokens: int = 1024,
) -> ResponseVariant:
    """Answer the patient question from scratch (no physician draft shown)."""
    prompt = render(template, {"PQ": exchange.patient_question})
    result = gateway.complete(ChatRequest.user(model_id, prompt, tag="generate", max_tokens=max_tokens))
    try:
        text = clean_reply(result.text)
    except EditError as exc:
        raise EditError(f"exchange {exchange.exchange_id!r}: {exc}") from exc
    return ResponseVariant(
        exchange_id=exchange.exchange_id,
        provenance=PROV_DIRECT,
        text=text,
        model_id=model_id,
        template_name=template.name,
    )


def edited_variant(
    gateway: Gateway,
    template: PromptTemplate,
    exchange: QAExchange,
    model_id: str,
    mode: str,
    level: str = "standard",
    max_tokens: int = 1024,
) -> ResponseVariant:
    """Rewrite the physician response for empathy with the given prompt mode."""
    provenance = level_provenance(mode, level)
    prompt = render(
        template,
        {"PQ": exchange.patient_question, "PR": exchange.physician_response},
        empathy_level=level,
    )
    result = gateway.complete(ChatRequest.user(model_id, prompt, tag="edit", max_tokens=max_tokens))
    try:
        text = clean_reply(result.text)
    except EditError as exc:
        raise EditError(f"exchange {exchange.exchange_id!r}: {exc}") from exc
    return ResponseVariant(
        exchange_id=exchange.exchange_id,
        provenance=provenance,
        text=text,
        model_id=model_id,
        template_name=template.name,
        empathy_level=level,
    )
