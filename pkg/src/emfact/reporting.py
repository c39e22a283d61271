"""Assembles human-readable reports from a pipeline artifact directory.

A report is a pure function of the stored artifacts: rebuilding from the
same directory yields identical bytes, and every number traces back to an
artifact file. Sections whose artifacts are missing are omitted with a note
rather than failing the whole report. Exports: JSON (full precision),
markdown (comparison matrix and fact-flow tables), CSV (one row per
comparison/judge or per subject/metric). Percentages print to one decimal,
metrics to two.
"""

from __future__ import annotations

import csv
import io
import json
import logging
from collections import defaultdict
from pathlib import Path

from . import artifacts as af
from .emranker import LABELS, ensemble_label, summarize_labels

logger = logging.getLogger(__name__)


class ReportError(ValueError):
    """Artifact schema mismatch while building a report."""


def _comparison_name(provenance_a: str, provenance_b: str) -> str:
    return f"{provenance_a} vs {provenance_b}"


def _corpus_section(artifact_dir: Path, notes: list[str]) -> dict | None:
    stats_path = artifact_dir / af.STATS_FILE
    corpus_path = artifact_dir / af.CORPUS_FILE
    if not corpus_path.is_file():
        notes.append(f"corpus section omitted: {af.CORPUS_FILE} not found")
        return None
    n = sum(1 for _ in af.read_jsonl(corpus_path))
    section: dict = {"n_exchanges": n}
    if stats_path.is_file():
        section["stats"] = af.load_json(stats_path)
    else:
        notes.append(f"corpus statistics omitted: {af.STATS_FILE} not found")
    return section


def _classification_section(artifact_dir: Path, notes: list[str]) -> dict | None:
    path = artifact_dir / af.CLASSIFY_FILE
    if not path.is_file():
        notes.append(f"classification section omitted: {af.CLASSIFY_FILE} not found")
        return None
    rows = af.load_jsonl(path)
    if not rows:
        notes.append(f"classification section omitted: {af.CLASSIFY_FILE} is empty")
        return None
    counts: dict[str, int] = defaultdict(int)
    for row in rows:
        counts[row["question_type"]] += 1
    total = len(rows)
    return {
        "total": total,
        "counts": dict(sorted(counts.items())),
        "percentages": {
            k: round(100.0 * v / total, 1) for k, v in sorted(counts.items())
        },
    }


def _empathy_section(artifact_dir: Path, notes: list[str]) -> dict | None:
    path = artifact_dir / af.JUDGMENTS_FILE
    if not path.is_file():
        notes.append(f"empathy section omitted: {af.JUDGMENTS_FILE} not found")
        return None
    rows = af.load_jsonl(path)
    if not rows:
        notes.append(f"empathy section omitted: {af.JUDGMENTS_FILE} is empty")
        return None

    by_cell: dict[tuple[str, str, str], list[dict]] = defaultdict(list)
    for row in rows:
        key = (row["provenance_a"], row["provenance_b"], row["judge_model"])
        by_cell[key].append(row)

    comparisons = []
    for (prov_a, prov_b, judge), cell_rows in sorted(by_cell.items()):
        comparisons.append(
            {
                "comparison": _comparison_name(prov_a, prov_b),
                "provenance_a": prov_a,
                "provenance_b": prov_b,
                "judge_model": judge,
                "summary": summarize_labels([r["label"] for r in cell_rows]),
            }
        )

    # Panel vote per comparison when several judges saw the same pairs.
    by_pair: dict[tuple[str, str], dict[str, list[str]]] = defaultdict(
        lambda: defaultdict(list)
    )
    judges_per_pair: dict[tuple[str, str], set[str]] = defaultdict(set)
    for row in rows:
        pair = (row["provenance_a"], row["provenance_b"])
        by_pair[pair][row["exchange_id"]].append(row["label"])
        judges_per_pair[pair].add(row["judge_model"])
    ensembles = []
    for pair, per_exchange in sorted(by_pair.items()):
        judges = sorted(judges_per_pair[pair])
        if len(judges) < 2:
            continue
        labels = [ensemble_label(votes) for _, votes in sorted(per_exchange.items())]
        ensembles.append(
            {
                "comparison": _comparison_name(*pair),
                "provenance_a": pair[0],
                "provenance_b": pair[1],
                "judges": judges,
                "summary": summarize_labels(labels),
            }
        )
    return {"comparisons": comparisons, "ensembles": ensembles}


def _factcheck_section(artifact_dir: Path, notes: list[str]) -> list[dict] | None:
    paths = sorted(artifact_dir.glob("factreport_*.json"))
    if not paths:
        notes.append("factcheck section omitted: no factreport_*.json found")
        return None
    return [af.load_json(p) for p in paths]


def _optional_json(artifact_dir: Path, filename: str, notes: list[str], section: str):
    path = artifact_dir / filename
    if not path.is_file():
        notes.append(f"{section} section omitted: {filename} not found")
        return None
    return af.load_json(path)


def build_report(artifact_dir: Path | str) -> dict:
    """Assemble the full report dict from whatever artifacts are present."""
    artifact_dir = Path(artifact_dir)
    if not artifact_dir.is_dir():
        raise ReportError(f"artifact directory not found: {artifact_dir}")
    notes: list[str] = []
    run_config = _optional_json(artifact_dir, af.RUN_CONFIG_FILE, notes, "run config")
    report = {
        "run_config": run_config,
        "corpus": _corpus_section(artifact_dir, notes),
        "classification": _classification_section(artifact_dir, notes),
        "empathy": _empathy_section(artifact_dir, notes),
        "factcheck": _factcheck_section(artifact_dir, notes),
        "sweep": _optional_json(artifact_dir, af.SWEEP_FILE, notes, "empathy-level sweep"),
        "alignment": _optional_json(artifact_dir, af.ALIGNMENT_FILE, notes, "alignment"),
        "validation": _optional_json(artifact_dir, af.VALIDATION_FILE, notes, "validation"),
        "coverage": _optional_json(artifact_dir, af.COVERAGE_FILE, notes, "category coverage"),
        "notes": notes,
    }
    return report


def _pct(value: float) -> str:
    return f"{value:.1f}"


def _met(value: float) -> str:
    return f"{value:.2f}"


def _md_table(headers: list[str], rows: list[list[str]]) -> list[str]:
    lines = [
        "| " + " | ".join(headers) + " |",
        "| " + " | ".join("---" for _ in headers) + " |",
    ]
    lines.extend("| " + " | ".join(row) + " |" for row in rows)
    return lines


def render_markdown(report: dict) -> str:
    lines: list[str] = ["# Evaluation report", ""]

    corpus = report.get("corpus")
    if corpus:
        lines += ["## Corpus", "", f"Exchanges: {corpus['n_exchanges']}", ""]
        stats = corpus.get("stats")
        if stats:
            rows = []
            for side in ("patient_question", "physician_response"):
                s = stats[side]
                rows.append(
                    [
                        side.replace("_", " "),
                        f"{s['words']['mean']:.1f} ± {s['words']['stddev']:.1f}",
                        f"{s['sentences']['mean']:.1f} ± {s['sentences']['stddev']:.1f}",
                        f"{s['chars']['mean']:.1f}",
                    ]
                )
            lines += _md_table(["Side", "Words (mean ± sd)", "Sentences (mean ± sd)", "Chars (mean)"], rows)
            lines.append("")

    classification = report.get("classification")
    if classification:
        lines += ["## Question classification", ""]
        rows = [
            [label, str(classification["counts"][label]), _pct(classification["percentages"][label])]
            for label in classification["counts"]
        ]
        lines += _md_table(["Type", "Count", "% of questions"], rows)
        lines.append("")

    empathy = report.get("empathy")
    if empathy:
        lines += ["## Empathy comparisons", ""]
        rows = []
        for cell in empathy["comparisons"]:
            s = cell["summary"]
            rows.append(
                [
                    cell["comparison"],
                    cell["judge_model"],
                    _pct(s["percentages"]["a_more"]),
                    _pct(s["percentages"]["b_more"]),
                    _pct(s["percentages"]["equal"]),
                    _pct(s["percentages"]["unclassified"]),
                    str(s["total"]),
                ]
            )
        for cell in empathy["ensembles"]:
            s = cell["summary"]
            rows.append(
                [
                    cell["comparison"],
                    "ensemble(" + "+".join(cell["judges"]) + ")",
                    _pct(s["percentages"]["a_more"]),
                    _pct(s["percentages"]["b_more"]),
                    _pct(s["percentages"]["equal"]),
                    _pct(s["percentages"]["unclassified"]),
                    str(s["total"]),
                ]
            )
        lines += _md_table(
            ["Comparison", "Judge", "A more %", "B more %", "Equal %", "Unclassified %", "n"],
            rows,
        )
        lines.append("")

    factcheck = report.get("factcheck")
    if factcheck:
        lines += ["## Fact flow", ""]
        flow_rows = []
        metric_rows = []
        for entry in factcheck:
            corpus_report = entry["corpus"]
            flow = corpus_report["flow"]
            name = entry["comparison"]["name"]
            flow_rows.append(
                [
                    name,
                    str(flow["original"]),
                    str(flow["preserved"]),
                    str(flow["edited"]),
                    str(flow["grounded"]),
                    str(flow["new"]),
                    _pct(100.0 * corpus_report["loss_rate"]) + "%",
                    _pct(100.0 * corpus_report["hallucination_rate"]) + "%",
                ]
            )
            metric_rows.append(
                [
                    name,
                    _met(corpus_report["micro_recall"]),
                    _met(corpus_report["micro_precision"]),
                    _met(corpus_report["micro_f1"]),
                    _met(corpus_report["macro_recall"]),
                    _met(corpus_report["macro_precision"]),
                    _met(corpus_report["macro_f1"]),
                ]
            )
        lines += _md_table(
            ["Comparison", "Original", "Preserved", "Edited", "Grounded", "New", "Loss", "Hallucination"],
            flow_rows,
        )
        lines += ["", "## Factual consistency metrics", ""]
        lines += _md_table(
            ["Comparison", "Micro R", "Micro P", "Micro F1", "Macro R", "Macro P", "Macro F1"],
            metric_rows,
        )
        lines.append("")
        band_rows = []
        for entry in factcheck:
            bands = entry.get("bands")
            if not bands:
                continue
            for band in ("short", "medium", "long"):
                info = bands["bands"].get(band)
                if not info or not info.get("n_pairs"):
                    continue
                ratio = info.get("fact_ratio")
                band_rows.append(
                    [
                        entry["comparison"]["name"],
                        band,
                        str(info["n_pairs"]),
                        _met(info["precision"]["mean"]),
                        _met(info["precision"]["median"]),
                        _met(ratio["mean"]) if ratio else "-",
                    ]
                )
        if band_rows:
            lines += ["## Precision by response length", ""]
            lines += _md_table(
                ["Comparison", "Band", "n", "Precision mean", "Precision median", "Fact ratio mean"],
                band_rows,
            )
            lines.append("")

    sweep = report.get("sweep")
    if sweep:
        lines += ["## Empathy-level sweep", ""]
        rows = []
        for level, entry in sweep.items():
            corpus_report = entry["corpus"]
            ratio = entry.get("mean_fact_ratio")
            rows.append(
                [
                    level,
                    _met(corpus_report["micro_recall"]),
                    _met(corpus_report["micro_precision"]),
                    _met(ratio) if ratio is not None else "-",
                ]
            )
        lines += _md_table(["Level", "Micro R", "Micro P", "Mean fact ratio"], rows)
        lines.append("")

    alignment = report.get("alignment")
    if alignment:
        lines += [
            "## Human alignment",
            "",
            f"Exact-match agreement: {alignment['matched']}/{alignment['total']} "
            f"= {_met(alignment['score'])}",
            "",
        ]

    validation = report.get("validation")
    if validation:
        lines += ["## Flag validation", ""]
        rows = []
        for direction in sorted(validation):
            entry = validation[direction]
            pct = entry.get("precision_percent")
            rows.append(
                [
                    direction,
                    str(entry["flagged"]),
                    str(entry["confirmed"]),
                    (_pct(pct) + "%") if pct is not None else "-",
                ]
            )
        lines += _md_table(["Direction", "Flagged", "Confirmed", "Precision"], rows)
        lines.append("")

    coverage = report.get("coverage")
    if coverage:
        lines += ["## Fabrication category coverage", ""]
        rows = []
        for category, entry in coverage["categories"].items():
            pct = entry.get("coverage_percent")
            rows.append(
                [
                    category,
                    str(entry["flagged"]),
                    str(entry["detected"]),
                    (_pct(pct) + "%") if pct is not None else "-",
                ]
            )
        overall = coverage["overall"]
        if overall.get("coverage_percent") is not None:
            rows.append(
                [
                    "Overall",
                    str(overall["flagged"]),
                    str(overall["detected"]),
                    f"{overall['coverage_percent']:.2f}%",
                ]
            )
        lines += _md_table(["Category", "Flagged", "Detected", "Coverage"], rows)
        lines.append("")

    notes = report.get("notes") or []
    if notes:
        lines += ["## Notes", ""]
        lines += [f"- {note}" for note in notes]
        lines.append("")
    return "\n".join(lines).rstrip() + "\n"


def render_csv(report: dict) -> str:
    """Long-format CSV: one row per comparison/judge/label share and one per
    subject/metric, formatted at the same precision as the markdown."""
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["section", "subject", "judge_model", "metric", "value"])

    empathy = report.get("empathy")
    if empathy:
        cells = [(c["comparison"], c["judge_model"], c["summary"]) for c in empathy["comparisons"]]
        cells += [
            (c["comparison"], "ensemble(" + "+".join(c["judges"]) + ")", c["summary"])
            for c in empathy["ensembles"]
        ]
        for comparison, judge, summary in cells:
            writer.writerow(["empathy", comparison, judge, "n", str(summary["total"])])
            for label in LABELS:
                writer.writerow(
                    [
                        "empathy",
                        comparison,
                        judge,
                        f"{label}_percent",
                        _pct(summary["percentages"][label]),
                    ]
                )

    factcheck = report.get("factcheck")
    if factcheck:
        for entry in factcheck:
            name = entry["comparison"]["name"]
            corpus_report = entry["corpus"]
            for metric in (
                "micro_recall", "micro_precision", "micro_f1",
                "macro_recall", "macro_precision", "macro_f1",
            ):
                writer.writerow(["factcheck", name, "", metric, _met(corpus_report[metric])])
            for rate in ("loss_rate", "hallucination_rate"):
                writer.writerow(
                    ["factcheck", name, "", f"{rate}_percent", _pct(100.0 * corpus_report[rate])]
                )
            for key, value in corpus_report["flow"].items():
                writer.writerow(["factcheck", name, "", f"flow_{key}", str(value)])

    sweep = report.get("sweep")
    if sweep:
        for level, entry in sweep.items():
            corpus_report = entry["corpus"]
            writer.writerow(
                ["sweep", level, "", "micro_recall", _met(corpus_report["micro_recall"])]
            )
            writer.writerow(
                ["sweep", level, "", "micro_precision", _met(corpus_report["micro_precision"])]
            )
            ratio = entry.get("mean_fact_ratio")
            writer.writerow(
                ["sweep", level, "", "mean_fact_ratio", _met(ratio) if ratio is not None else ""]
            )

    alignment = report.get("alignment")
    if alignment:
        writer.writerow(["alignment", "judgments", "", "matched", str(alignment["matched"])])
        writer.writerow(["alignment", "judgments", "", "total", str(alignment["total"])])
        writer.writerow(["alignment", "judgments", "", "score", _met(alignment["score"])])

    validation = report.get("validation")
    if validation:
        for direction in sorted(validation):
            entry = validation[direction]
            writer.writerow(["validation", direction, "", "flagged", str(entry["flagged"])])
            writer.writerow(["validation", direction, "", "confirmed", str(entry["confirmed"])])
            pct = entry.get("precision_percent")
            if pct is not None:
                writer.writerow(["validation", direction, "", "precision_percent", _pct(pct)])

    coverage = report.get("coverage")
    if coverage:
        for category, entry in coverage["categories"].items():
            writer.writerow(["coverage", category, "", "flagged", str(entry["flagged"])])
            writer.writerow(["coverage", category, "", "detected", str(entry["detected"])])
        overall = coverage["overall"]
        if overall.get("coverage_percent") is not None:
            writer.writerow(
                ["coverage", "Overall", "", "coverage_percent", f"{overall['coverage_percent']:.2f}"]
            )
    return buf.getvalue()


def render_json(report: dict) -> str:
    """Full-precision JSON; reload and re-export is byte-identical."""
    return json.dumps(report, ensure_ascii=False, sort_keys=True, indent=2) + "\n"


_RENDERERS = {"json": render_json, "md": render_markdown, "csv": render_csv}
_SUFFIXES = {"json": af.REPORT_JSON_FILE, "md": af.REPORT_MD_FILE, "csv": af.REPORT_CSV_FILE}


def export_report(report: dict, fmt: str, out_path: Path | str) -> Path:
    if fmt not in _RENDERERS:
        raise ReportError(f"unknown report format {fmt!r} (expected one of {sorted(_RENDERERS)})")
    out_path = Path(out_path)
    af.atomic_write_text(out_path, _RENDERERS[fmt](report))
    logger.info("wrote %s report to %s", fmt, out_path)
    return out_path


def default_report_name(fmt: str) -> str:
    return _SUFFIXES[fmt]
