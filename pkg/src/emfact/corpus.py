"""Question-answer corpus: ingestion, descriptive statistics, length bands.

An exchange is one patient question paired with the physician's free-text
answer, keyed by a unique exchange id. Corpora load from JSONL or CSV with
identical semantics. Statistics use transparent tokenization rules (words
are whitespace-delimited; sentences end at a run of . ! ? followed by
whitespace or end of text) and population standard deviation, and the rules
are recorded alongside the numbers so they never have to be guessed from
the output.
"""

from __future__ import annotations

import csv
import logging
import re
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .artifacts import read_jsonl, write_jsonl
from .gateway import ChatRequest, Gateway
from .prompts import PromptTemplate, render

logger = logging.getLogger(__name__)

# Character-length band edges: short < 231, 231 <= medium <= 393, long > 393.
DEFAULT_BAND_EDGES = (231, 393)

QUESTION_TYPES = ("general", "ehr_dependent", "unclassified")

_REQUIRED_COLUMNS = ("exchange_id", "patient_question", "physician_response")


class CorpusError(ValueError):
    """Malformed corpus input."""


@dataclass(frozen=True)
class QAExchange:
    exchange_id: str
    patient_question: str
    physician_response: str

    def __post_init__(self) -> None:
        if not self.exchange_id:
            raise CorpusError("exchange_id must be nonempty")
        if not self.patient_question:
            raise CorpusError(f"exchange {self.exchange_id!r}: empty patient_question")
        if not self.physician_response:
            raise CorpusError(f"exchange {self.exchange_id!r}: empty physician_response")

    def to_record(self) -> dict:
        return {
            "exchange_id": self.exchange_id,
            "patient_question": self.patient_question,
            "physician_response": self.physician_response,
        }


def _build_exchange(record: dict, where: str) -> QAExchange:
    missing = [c for c in _REQUIRED_COLUMNS if not str(record.get(c) or "").strip()]
    if missing:
        raise CorpusError(f"{where}: missing or empty field(s) {', '.join(missing)}")
    return QAExchange(
        exchange_id=str(record["exchange_id"]).strip(),
        patient_question=str(record["patient_question"]).strip(),
        physician_response=str(record["physician_response"]).strip(),
    )


def load_corpus(path: Path | str, fmt: str | None = None) -> list[QAExchange]:
    """Load a corpus from .jsonl or .csv; duplicate ids are an error.

    fmt overrides the suffix-based format detection.
    """
    path = Path(path)
    if not path.is_file():
        raise CorpusError(f"corpus file not found: {path}")
    detected = fmt or path.suffix.lower().lstrip(".")
    if detected == "csv":
        exchanges = _load_csv(path)
    elif detected == "jsonl":
        exchanges = _load_jsonl(path)
    else:
        raise CorpusError(f"unsupported corpus format {detected!r} (use jsonl or csv)")

    seen: dict[str, int] = {}
    for lineno, exchange in exchanges:
        if exchange.exchange_id in seen:
            raise CorpusError(
                f"{path}: duplicate exchange_id {exchange.exchange_id!r} "
                f"(lines {seen[exchange.exchange_id]} and {lineno})"
            )
        seen[exchange.exchange_id] = lineno
    result = [e for _, e in exchanges]
    logger.info("loaded %d exchanges from %s", len(result), path)
    return result


def _load_jsonl(path: Path) -> list[tuple[int, QAExchange]]:
    return [
        (lineno, _build_exchange(record, f"{path}:{lineno}"))
        for lineno, record in read_jsonl(path)
    ]


def _load_csv(path: Path) -> list[tuple[int, QAExchange]]:
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None:
            raise CorpusError(f"{path}: empty CSV")
        missing = [c for c in _REQUIRED_COLUMNS if c not in reader.fieldnames]
        if missing:
            raise CorpusError(f"{path}: missing column(s) {', '.join(missing)}")
        out = []
        for row in reader:
            # DictReader consumed the header, so data starts at line 2.
            out.append((reader.line_num, _build_exchange(row, f"{path}:{reader.line_num}")))
    return out


def save_corpus(path: Path | str, exchanges: Sequence[QAExchange]) -> None:
    write_jsonl(path, (e.to_record() for e in exchanges))


_SENTENCE_END_RE = re.compile(r"[.!?]+(?:\s+|$)")


def word_count(text: str) -> int:
    return len(text.split())


def sentence_count(text: str) -> int:
    """Sentences end at a run of . ! ? followed by whitespace or end of text;
    a trailing unterminated fragment still counts as a sentence."""
    return sum(1 for piece in _SENTENCE_END_RE.split(text) if piece.strip())


def _describe(values: Sequence[int]) -> dict:
    arr = np.asarray(values, dtype=float)
    return {
        "mean": float(arr.mean()),
        "stddev": float(arr.std()),  # population, ddof=0
        "min": int(arr.min()),
        "max": int(arr.max()),
    }


def compute_stats(exchanges: Sequence[QAExchange]) -> dict:
    """Descriptive statistics for both sides of every exchange."""
    if not exchanges:
        raise CorpusError("cannot compute statistics of an empty corpus")
    sides = {
        "patient_question": [e.patient_question for e in exchanges],
        "physician_response": [e.physician_response for e in exchanges],
    }
    stats: dict = {"n_exchanges": len(exchanges)}
    for side, texts in sides.items():
        stats[side] = {
            "words": _describe([word_count(t) for t in texts]),
            "sentences": _describe([sentence_count(t) for t in texts]),
            "chars": _describe([len(t) for t in texts]),
        }
    response_chars = [len(t) for t in sides["physician_response"]]
    lo, hi = tertile_boundaries(response_chars)
    stats["response_length_tertiles"] = {"lower": lo, "upper": hi}
    stats["tokenization"] = {
        "words": "whitespace-delimited",
        "sentences": "runs of .!? followed by whitespace or end of text",
    }
    return stats


def tertile_boundaries(values: Sequence[int | float]) -> tuple[float, float]:
    """1/3 and 2/3 quantiles with linear interpolation."""
    if not values:
        raise CorpusError("cannot compute tertiles of an empty sequence")
    arr = np.asarray(values, dtype=float)
    lo, hi = np.quantile(arr, [1 / 3, 2 / 3])
    return float(lo), float(hi)


def length_band(n_chars: int, edges: tuple[float, float] = DEFAULT_BAND_EDGES) -> str:
    """Band a character length as short/medium/long. Both edges are inclusive
    on the medium side."""
    lo, hi = edges
    if lo > hi:
        raise ValueError(f"band edges out of order: {edges}")
    if n_chars < lo:
        return "short"
    if n_chars > hi:
        return "long"
    return "medium"


def _parse_question_type(reply: str) -> str | None:
    """'ehr' without 'general' -> ehr_dependent; the converse -> general;
    anything else is ambiguous."""
    lowered = reply.casefold()
    has_ehr = "ehr" in lowered
    has_general = "general" in lowered
    if has_ehr and not has_general:
        return "ehr_dependent"
    if has_general and not has_ehr:
        return "general"
    return None


def classify_question(
    gateway: Gateway,
    template: PromptTemplate,
    exchange: QAExchange,
    model_id: str,
) -> dict:
    """Label one question general vs. EHR-dependent via the gateway.

    An ambiguous reply gets one cache-bypassing retry; if that is also
    ambiguous the question is recorded as unclassified with the raw reply
    kept for audit.
    """
    prompt = render(template, {"PQ": exchange.patient_question})
    req = ChatRequest.user(model_id, prompt, tag="classify")
    result = gateway.complete(req)
    label = _parse_question_type(result.text)
    retried = False
    if label is None:
        retried = True
        result = gateway.complete(req, use_cache=False)
        label = _parse_question_type(result.text)
    return {
        "exchange_id": exchange.exchange_id,
        "question_type": label or "unclassified",
        "model_id": model_id,
        "raw_reply": result.text,
        "retried": retried,
    }


def classify_corpus(
    gateway: Gateway,
    template: PromptTemplate,
    exchanges: Iterable[QAExchange],
    model_id: str,
) -> list[dict]:
    """Classify every question; summary counts land in the log."""
    rows = [classify_question(gateway, template, e, model_id) for e in exchanges]
    counts = {t: sum(1 for r in rows if r["question_type"] == t) for t in QUESTION_TYPES}
    logger.info("question classification: %s", counts)
    return rows
