"""Annotation service: serves blinded tasks to human annotators and journals
their judgments.

Two task kinds: empathy_pair (three-way choice between two responses whose
identities and display order are hidden from the annotator; the order is
drawn from a seeded RNG and kept server-side) and fact_review (confirm or
reject each automatically flagged fact, optionally naming the fabrication
category). Submissions append to a fsynced JSONL journal before the request
is acknowledged, so a crash never loses an acked judgment. Exports unmap
the display order and produce exactly the rows the alignment and validation
computations consume.
"""

# No `from __future__ import annotations` here: FastAPI must resolve the
# endpoint annotations at definition time, and the web types are imported
# locally inside create_app.

import logging
import random
import threading
from dataclasses import dataclass
from datetime import datetime, timezone
from pathlib import Path
from typing import Mapping, Sequence

from .artifacts import append_jsonl, load_json, load_jsonl, write_jsonl
from .corpus import QAExchange
from .editor import ResponseVariant
from .factcheck import FABRICATION_CATEGORIES

logger = logging.getLogger(__name__)

KIND_EMPATHY = "empathy_pair"
KIND_FACT_REVIEW = "fact_review"
TASK_KINDS = (KIND_EMPATHY, KIND_FACT_REVIEW)

EMPATHY_CHOICES = ("first_shown", "second_shown", "equal")
FACT_DECISIONS = ("confirmed", "rejected")

TASKS_FILE = "tasks.jsonl"
JOURNAL_FILE = "journal.jsonl"


class AnnotationError(ValueError):
    """Store-level failure; subclasses map to HTTP status codes."""


class UnknownTaskError(AnnotationError):
    pass


class VocabularyError(AnnotationError):
    pass


class DuplicateSubmissionError(AnnotationError):
    """Same (task, annotator) submitted again with a different body."""


@dataclass(frozen=True)
class AnnotationTask:
    task_id: str
    kind: str
    exchange_id: str
    payload: dict
    hidden: dict

    def public_view(self) -> dict:
        """What the annotator's client may see: never the hidden fields."""
        return {
            "task_id": self.task_id,
            "kind": self.kind,
            "exchange_id": self.exchange_id,
            "payload": self.payload,
        }

    def to_record(self) -> dict:
        return {
            "task_id": self.task_id,
            "kind": self.kind,
            "exchange_id": self.exchange_id,
            "payload": self.payload,
            "hidden": self.hidden,
        }

    @classmethod
    def from_record(cls, record: dict) -> "AnnotationTask":
        return cls(
            task_id=record["task_id"],
            kind=record["kind"],
            exchange_id=record["exchange_id"],
            payload=record["payload"],
            hidden=record.get("hidden", {}),
        )


def create_empathy_tasks(
    exchanges: Sequence[QAExchange],
    variants_a: Mapping[str, ResponseVariant],
    variants_b: Mapping[str, ResponseVariant],
    seed: int,
) -> list[AnnotationTask]:
    """One blinded task per exchange present in both variant maps.

    Display order per task comes from a RNG seeded with `seed`, and both the
    order and the seed are stored server-side so a study is reproducible
    and the exported labels can be unmapped.
    """
    rng = random.Random(seed)
    tasks = []
    for exchange in exchanges:
        a = variants_a.get(exchange.exchange_id)
        b = variants_b.get(exchange.exchange_id)
        if a is None or b is None:
            continue
        order = "ab" if rng.random() < 0.5 else "ba"
        first, second = (a, b) if order == "ab" else (b, a)
        tasks.append(
            AnnotationTask(
                task_id=f"emp-{exchange.exchange_id}",
                kind=KIND_EMPATHY,
                exchange_id=exchange.exchange_id,
                payload={
                    "patient_question": exchange.patient_question,
                    "response_first": first.text,
                    "response_second": second.text,
                },
                hidden={
                    "order": order,
                    "provenance_a": a.provenance,
                    "provenance_b": b.provenance,
                    "model_a": a.model_id,
                    "model_b": b.model_id,
                    "seed": seed,
                },
            )
        )
    return tasks


def create_fact_review_tasks(flagged_rows: Sequence[Mapping]) -> list[AnnotationTask]:
    """One task per exchange, listing every flagged fact with its direction.

    Rows need exchange_id, direction, fact, original_text, edited_text;
    direction says which side flagged the fact (not_preserved / added).
    """
    by_exchange: dict[str, list[Mapping]] = {}
    for row in flagged_rows:
        by_exchange.setdefault(row["exchange_id"], []).append(row)
    tasks = []
    for exchange_id, rows in sorted(by_exchange.items()):
        tasks.append(
            AnnotationTask(
                task_id=f"fact-{exchange_id}",
                kind=KIND_FACT_REVIEW,
                exchange_id=exchange_id,
                payload={
                    "original_text": rows[0]["original_text"],
                    "edited_text": rows[0]["edited_text"],
                    "facts": [
                        {"fact": r["fact"], "direction": r["direction"]} for r in rows
                    ],
                    "categories": list(FABRICATION_CATEGORIES),
                },
                hidden={},
            )
        )
    return tasks


def _submission_body(record: Mapping) -> tuple:
    """The part of a submission that must match for idempotent duplicates."""
    return (
        record["task_id"],
        record["annotator"],
        record.get("label"),
        tuple(
            (d["decision"], d.get("category")) for d in record.get("decisions") or ()
        ),
    )


class TaskStore:
    """Task definitions plus an append-only submission journal on disk."""

    def __init__(self, directory: Path | str):
        self.directory = Path(directory)
        self.directory.mkdir(parents=True, exist_ok=True)
        self._lock = threading.Lock()
        self.tasks: dict[str, AnnotationTask] = {}
        self._task_order: list[str] = []
        self.submissions: dict[tuple[str, str], dict] = {}
        self._load()

    @property
    def tasks_path(self) -> Path:
        return self.directory / TASKS_FILE

    @property
    def journal_path(self) -> Path:
        return self.directory / JOURNAL_FILE

    def _load(self) -> None:
        if self.tasks_path.is_file():
            for record in load_jsonl(self.tasks_path):
                task = AnnotationTask.from_record(record)
                self.tasks[task.task_id] = task
                self._task_order.append(task.task_id)
        if self.journal_path.is_file():
            for record in load_jsonl(self.journal_path):
                self.submissions[(record["task_id"], record["annotator"])] = record
        logger.info(
            "task store at %s: %d tasks, %d submissions",
            self.directory,
            len(self.tasks),
            len(self.submissions),
        )

    def add_tasks(self, tasks: Sequence[AnnotationTask]) -> None:
        with self._lock:
            for task in tasks:
                if task.task_id in self.tasks:
                    raise AnnotationError(f"duplicate task id {task.task_id!r}")
                if task.kind not in TASK_KINDS:
                    raise VocabularyError(f"unknown task kind {task.kind!r}")
                self.tasks[task.task_id] = task
                self._task_order.append(task.task_id)
            write_jsonl(
                self.tasks_path,
                (self.tasks[tid].to_record() for tid in self._task_order),
            )

    def next_task(self, annotator: str) -> AnnotationTask | None:
        """First task this annotator has not submitted yet, in batch order."""
        if not annotator:
            raise VocabularyError("annotator id must be nonempty")
        with self._lock:
            for task_id in self._task_order:
                if (task_id, annotator) not in self.submissions:
                    return self.tasks[task_id]
        return None

    def remaining(self, annotator: str) -> int:
        with self._lock:
            return sum(
                1 for tid in self._task_order if (tid, annotator) not in self.submissions
            )

    def _validate(self, submission: Mapping) -> dict:
        task_id = submission.get("task_id") or ""
        annotator = submission.get("annotator") or ""
        if task_id not in self.tasks:
            raise UnknownTaskError(f"unknown task {task_id!r}")
        if not annotator:
            raise VocabularyError("annotator id must be nonempty")
        task = self.tasks[task_id]
        record: dict = {"task_id": task_id, "annotator": annotator, "kind": task.kind}
        if task.kind == KIND_EMPATHY:
            label = submission.get("label")
            if label not in EMPATHY_CHOICES:
                raise VocabularyError(
                    f"label must be one of {EMPATHY_CHOICES}, got {label!r}"
                )
            record["label"] = label
        else:
            decisions = submission.get("decisions")
            facts = task.payload["facts"]
            if not isinstance(decisions, list) or len(decisions) != len(facts):
                raise VocabularyError(
                    f"fact_review needs one decision per fact ({len(facts)} expected)"
                )
            cleaned = []
            for i, decision in enumerate(decisions):
                verdict = decision.get("decision")
                if verdict not in FACT_DECISIONS:
                    raise VocabularyError(
                        f"decision {i}: must be one of {FACT_DECISIONS}, got {verdict!r}"
                    )
                category = decision.get("category")
                if category is not None and category not in FABRICATION_CATEGORIES:
                    raise VocabularyError(f"decision {i}: unknown category {category!r}")
                cleaned.append({"decision": verdict, "category": category})
            record["decisions"] = cleaned
        return record

    def submit(self, submission: Mapping) -> tuple[dict, bool]:
        """Validate and journal one submission.

        Returns (stored_record, created). A byte-equal resubmission is
        idempotent and returns the original record with created=False; a
        conflicting one raises DuplicateSubmissionError.
        """
        record = self._validate(submission)
        key = (record["task_id"], record["annotator"])
        with self._lock:
            existing = self.submissions.get(key)
            if existing is not None:
                if _submission_body(existing) == _submission_body(record):
                    return existing, False
                raise DuplicateSubmissionError(
                    f"task {key[0]!r} already submitted by {key[1]!r} with a different body"
                )
            record["submitted_at"] = submission.get("submitted_at") or datetime.now(
                timezone.utc
            ).isoformat()
            # Durable before ack: append_jsonl fsyncs.
            append_jsonl(self.journal_path, record)
            self.submissions[key] = record
        return record, True

    def export_empathy(self) -> list[dict]:
        """Human empathy labels with the display order unmapped to a/b."""
        rows = []
        for (task_id, annotator), record in sorted(self.submissions.items()):
            task = self.tasks.get(task_id)
            if task is None or task.kind != KIND_EMPATHY:
                continue
            order = task.hidden["order"]
            label = record["label"]
            if label == "equal":
                unmapped = "equal"
            elif label == "first_shown":
                unmapped = "a_more" if order == "ab" else "b_more"
            else:
                unmapped = "b_more" if order == "ab" else "a_more"
            rows.append(
                {
                    "task_id": task_id,
                    "exchange_id": task.exchange_id,
                    "annotator": annotator,
                    "label": unmapped,
                    "provenance_a": task.hidden["provenance_a"],
                    "provenance_b": task.hidden["provenance_b"],
                    "submitted_at": record["submitted_at"],
                }
            )
        return rows

    def export_fact_review(self) -> list[dict]:
        """One row per reviewed fact, in validation_tallies shape."""
        rows = []
        for (task_id, annotator), record in sorted(self.submissions.items()):
            task = self.tasks.get(task_id)
            if task is None or task.kind != KIND_FACT_REVIEW:
                continue
            for fact_entry, decision in zip(task.payload["facts"], record["decisions"]):
                rows.append(
                    {
                        "task_id": task_id,
                        "exchange_id": task.exchange_id,
                        "annotator": annotator,
                        "direction": fact_entry["direction"],
                        "fact": fact_entry["fact"],
                        "confirmed": decision["decision"] == "confirmed",
                        "category": decision["category"],
                        "submitted_at": record["submitted_at"],
                    }
                )
        return rows


def load_tokens(path: Path | str | None) -> dict[str, str] | None:
    """Annotator-id-to-bearer-token map; None disables auth entirely."""
    if path is None:
        return None
    data = load_json(path)
    if not isinstance(data, dict) or not all(
        isinstance(k, str) and isinstance(v, str) for k, v in data.items()
    ):
        raise AnnotationError(f"token file {path} must map annotator ids to token strings")
    return data


def create_app(
    store: TaskStore,
    tokens: Mapping[str, str] | None = None,
    static_dir: Path | str | None = None,
):
    """FastAPI app over a TaskStore; optionally serves the UI's static files."""
    from fastapi import FastAPI, HTTPException, Request
    from fastapi.staticfiles import StaticFiles
    from pydantic import BaseModel

    class DecisionIn(BaseModel):
        decision: str
        category: str | None = None

    class SubmissionIn(BaseModel):
        task_id: str
        annotator: str
        label: str | None = None
        decisions: list[DecisionIn] | None = None
        submitted_at: str | None = None

    app = FastAPI(title="annotation service")

    def check_auth(request: Request, annotator: str | None) -> None:
        """With tokens configured, the header must carry the annotator's own
        token; annotator=None (operator endpoints) accepts any known token."""
        if tokens is None:
            return
        header = request.headers.get("authorization", "")
        if annotator is None:
            if any(header == f"Bearer {t}" for t in tokens.values()):
                return
        else:
            expected = tokens.get(annotator)
            if expected and header == f"Bearer {expected}":
                return
        raise HTTPException(status_code=401, detail="bad or missing bearer token")

    @app.get("/api/health")
    def health() -> dict:
        kinds: dict[str, int] = {}
        for task in store.tasks.values():
            kinds[task.kind] = kinds.get(task.kind, 0) + 1
        return {
            "status": "ok",
            "tasks": len(store.tasks),
            "kinds": kinds,
            "submissions": len(store.submissions),
        }

    @app.get("/api/tasks/next")
    def tasks_next(annotator: str, request: Request) -> dict:
        check_auth(request, annotator)
        try:
            task = store.next_task(annotator)
        except VocabularyError as exc:
            raise HTTPException(status_code=400, detail=str(exc)) from exc
        return {
            "task": task.public_view() if task else None,
            "remaining": store.remaining(annotator),
        }

    @app.post("/api/submissions")
    def submissions(body: SubmissionIn, request: Request) -> dict:
        check_auth(request, body.annotator)
        payload = body.model_dump()
        try:
            record, created = store.submit(payload)
        except UnknownTaskError as exc:
            raise HTTPException(status_code=404, detail=str(exc)) from exc
        except DuplicateSubmissionError as exc:
            raise HTTPException(status_code=409, detail=str(exc)) from exc
        except VocabularyError as exc:
            raise HTTPException(status_code=400, detail=str(exc)) from exc
        return {
            "status": "accepted" if created else "duplicate",
            "task_id": record["task_id"],
            "remaining": store.remaining(record["annotator"]),
        }

    @app.get("/api/export")
    def export(kind: str, request: Request) -> dict:
        check_auth(request, None)
        if kind == "empathy":
            rows = store.export_empathy()
        elif kind == "fact_review":
            rows = store.export_fact_review()
        else:
            raise HTTPException(
                status_code=400, detail="kind must be empathy or fact_review"
            )
        return {"kind": kind, "rows": rows}

    if static_dir is not None:
        app.mount("/", StaticFiles(directory=str(static_dir), html=True), name="ui")
    return app
