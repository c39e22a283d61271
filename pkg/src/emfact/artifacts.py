"""Shared artifact file helpers: JSONL I/O, atomic writes, checksums.

Artifact directories are flat with stage-prefixed filenames so runs are
diff-able and auditable. Every writer in the pipeline goes through
write_jsonl / write_json so records land atomically and byte-stably
(sorted keys, fixed separators), which is what makes rerun comparisons by
file hash meaningful.
"""

from __future__ import annotations

import hashlib
import json
import os
import re
import tempfile
from pathlib import Path
from typing import Any, Iterable, Iterator

# Canonical filenames inside an artifact directory. Stage outputs that exist
# per comparison get a slug suffix (see comparison_slug).
RUN_CONFIG_FILE = "run_config.json"
CORPUS_FILE = "corpus.jsonl"
STATS_FILE = "stats.json"
CLASSIFY_FILE = "classify.jsonl"
EDITED_VARIANTS_FILE = "variants_edited.jsonl"
DIRECT_VARIANTS_FILE = "variants_direct.jsonl"
JUDGMENTS_FILE = "judgments.jsonl"
ALIGNMENT_FILE = "alignment.json"
HUMAN_LABELS_FILE = "human_labels.jsonl"
SWEEP_FILE = "sweep.json"
VALIDATION_FILE = "validation.json"
COVERAGE_FILE = "coverage.json"
REPORT_JSON_FILE = "report.json"
REPORT_MD_FILE = "report.md"
REPORT_CSV_FILE = "report.csv"

_SLUG_RE = re.compile(r"[^a-z0-9]+")


def comparison_slug(provenance_a: str, provenance_b: str) -> str:
    """Filesystem-safe identifier for an (a, b) comparison."""
    def clean(name: str) -> str:
        return _SLUG_RE.sub("-", name.casefold()).strip("-")

    return f"{clean(provenance_a)}_vs_{clean(provenance_b)}"


def factreport_file(slug: str) -> str:
    return f"factreport_{slug}.json"


def facts_file(slug: str) -> str:
    return f"facts_{slug}.jsonl"


def entailments_file(slug: str) -> str:
    return f"entailments_{slug}.jsonl"


def dumps_stable(obj: Any) -> str:
    """Serialize to JSON with a byte-stable layout (sorted keys, no spaces)."""
    return json.dumps(obj, ensure_ascii=False, sort_keys=True, separators=(",", ":"))


def atomic_write_text(path: Path, text: str) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=str(path.parent), prefix=path.name, suffix=".tmp")
    try:
        with os.fdopen(fd, "w", encoding="utf-8") as f:
            f.write(text)
            f.flush()
            os.fsync(f.fileno())
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def write_jsonl(path: Path | str, records: Iterable[dict]) -> None:
    """Write records as one JSON object per line, atomically."""
    path = Path(path)
    lines = "".join(dumps_stable(r) + "\n" for r in records)
    atomic_write_text(path, lines)


def append_jsonl(path: Path | str, record: dict) -> None:
    """Append one record and fsync, so it is durable before the caller acks."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("a", encoding="utf-8") as f:
        f.write(dumps_stable(record) + "\n")
        f.flush()
        os.fsync(f.fileno())


def read_jsonl(path: Path | str) -> Iterator[tuple[int, dict]]:
    """Yield (line_number, record) pairs, skipping blank lines.

    Line numbers are 1-based so parse errors can name the offending line.
    """
    path = Path(path)
    with path.open("r", encoding="utf-8") as f:
        for lineno, line in enumerate(f, start=1):
            stripped = line.strip()
            if not stripped:
                continue
            try:
                record = json.loads(stripped)
            except json.JSONDecodeError as exc:
                raise ValueError(f"{path}: malformed JSON on line {lineno}: {exc}") from exc
            if not isinstance(record, dict):
                raise ValueError(f"{path}: line {lineno} is not a JSON object")
            yield lineno, record


def load_jsonl(path: Path | str) -> list[dict]:
    """Read a whole JSONL file into a list of records."""
    return [record for _, record in read_jsonl(path)]


def write_json(path: Path | str, obj: Any) -> None:
    """Write a JSON document with stable formatting, atomically."""
    text = json.dumps(obj, ensure_ascii=False, sort_keys=True, indent=2) + "\n"
    atomic_write_text(Path(path), text)


def load_json(path: Path | str) -> Any:
    with Path(path).open("r", encoding="utf-8") as f:
        return json.load(f)


def sha256_text(text: str) -> str:
    return hashlib.sha256(text.encode("utf-8")).hexdigest()


def sha256_file(path: Path | str) -> str:
    h = hashlib.sha256()
    with Path(path).open("rb") as f:
        for chunk in iter(lambda: f.read(65536), b""):
            h.update(chunk)
    return h.hexdigest()
