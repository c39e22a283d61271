"""Prompt template storage and rendering.

Templates live as plain text assets (one file per template) so clinical
teams can audit them without reading code. Rendering is pure string
substitution over a closed placeholder vocabulary; every report embeds the
per-template checksums so results are traceable to exact prompt bytes.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from pathlib import Path

from .artifacts import sha256_text

TEMPLATE_NAMES = (
    "simple_edit",
    "refined_edit",
    "direct_generate",
    "emrank3",
    "fact_extract",
    "entail",
    "classify",
)

# Templates that accept an empathy intensity level.
EDIT_TEMPLATES = frozenset({"simple_edit", "refined_edit"})

EMPATHY_LEVELS = ("standard", "high", "extreme")

# The simple-edit instruction asks for a "more empathetic" revision; the
# intensity sweep swaps that descriptor phrase. The exact wording used is
# recorded in run metadata because it is a reproducibility-sensitive choice.
EMPATHY_DESCRIPTOR = "more empathetic"
LEVEL_PHRASES = {
    "standard": EMPATHY_DESCRIPTOR,
    "high": "highly empathetic",
    "extreme": "extremely empathetic",
}

TEMPLATE_VERSION = "v1"

_PLACEHOLDER_RE = re.compile(r"\{(PQ|PR|R1|R2|premise|hypothesis|text)\}")

_DEFAULT_DIR = Path(__file__).parent / "templates"


class PromptError(ValueError):
    """Raised for unknown templates, unbound placeholders, or bad levels."""


@dataclass(frozen=True)
class PromptTemplate:
    name: str
    body: str
    version: str = TEMPLATE_VERSION

    @property
    def checksum(self) -> str:
        return sha256_text(self.body)

    @property
    def placeholders(self) -> tuple[str, ...]:
        seen: list[str] = []
        for m in _PLACEHOLDER_RE.finditer(self.body):
            if m.group(1) not in seen:
                seen.append(m.group(1))
        return tuple(seen)

    @property
    def has_empathy_descriptor(self) -> bool:
        return EMPATHY_DESCRIPTOR in self.body


def load_template(name: str, template_dir: Path | str | None = None) -> PromptTemplate:
    """Load one template by name from the template directory."""
    if name not in TEMPLATE_NAMES:
        raise PromptError(f"unknown template {name!r}; known: {', '.join(TEMPLATE_NAMES)}")
    directory = Path(template_dir) if template_dir else _DEFAULT_DIR
    path = directory / f"{name}.txt"
    if not path.is_file():
        raise PromptError(f"template file not found: {path}")
    return PromptTemplate(name=name, body=path.read_text(encoding="utf-8"))


def load_all_templates(template_dir: Path | str | None = None) -> dict[str, PromptTemplate]:
    return {name: load_template(name, template_dir) for name in TEMPLATE_NAMES}


def template_checksums(template_dir: Path | str | None = None) -> dict[str, str]:
    """Checksum per template, embedded in every report for auditability."""
    return {name: t.checksum for name, t in load_all_templates(template_dir).items()}


def render(
    template: PromptTemplate,
    bindings: dict[str, str],
    empathy_level: str | None = None,
) -> str:
    """Substitute placeholders into the template body.

    Every placeholder appearing in the body must be bound; any leftover
    marker is a bug, so rendering re-scans its own output. The empathy
    level, when given, replaces the descriptor phrase and is only legal on
    edit templates.
    """
    body = template.body
    if empathy_level is not None:
        if empathy_level not in EMPATHY_LEVELS:
            raise PromptError(f"unknown empathy level {empathy_level!r}")
        if template.name not in EDIT_TEMPLATES:
            raise PromptError(
                f"empathy level applies only to edit templates, not {template.name!r}"
            )
        if empathy_level != "standard":
            if not template.has_empathy_descriptor:
                raise PromptError(
                    f"template {template.name!r} has no empathy descriptor slot"
                )
            body = body.replace(EMPATHY_DESCRIPTOR, LEVEL_PHRASES[empathy_level])

    # Single-pass substitution: markers inside binding values stay literal
    # payload instead of being re-expanded, and no template marker can
    # survive because every match is either replaced or rejected here.
    def _substitute(match: re.Match[str]) -> str:
        placeholder = match.group(1)
        if placeholder not in bindings:
            raise PromptError(
                f"unbound placeholder {{{placeholder}}} in template {template.name!r}"
            )
        return bindings[placeholder]

    return _PLACEHOLDER_RE.sub(_substitute, body)
