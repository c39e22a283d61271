"""Renders report data as matplotlib figures.

The report module exports plot-ready numbers; this consumer turns them into
PNG files next to the delimited output. Rendering is headless (Agg) and
deterministic: fixed sizes, fixed dpi, constant PNG metadata, so reruns on
unchanged artifacts produce identical bytes.
"""

from __future__ import annotations

import logging
from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402  (backend must be set first)

logger = logging.getLogger(__name__)

_DPI = 150
_PNG_METADATA = {"Software": "emfact"}

_LABEL_COLORS = {
    "a_more": "#4c72b0",
    "b_more": "#dd8452",
    "equal": "#55a868",
    "unclassified": "#c44e52",
}


def _save(fig, path: Path) -> Path:
    path.parent.mkdir(parents=True, exist_ok=True)
    fig.savefig(path, dpi=_DPI, metadata=_PNG_METADATA, bbox_inches="tight")
    plt.close(fig)
    logger.info("wrote figure %s", path)
    return path


def empathy_figure(empathy: dict, path: Path) -> Path:
    """Stacked horizontal bars of label shares per comparison/judge cell."""
    cells = [(c["comparison"], c["judge_model"], c["summary"]) for c in empathy["comparisons"]]
    cells += [
        (c["comparison"], "ensemble(" + "+".join(c["judges"]) + ")", c["summary"])
        for c in empathy["ensembles"]
    ]
    names = [f"{comparison}\n[{judge}]" for comparison, judge, _ in cells]
    fig, ax = plt.subplots(figsize=(9, 1.2 + 0.7 * len(cells)))
    left = [0.0] * len(cells)
    for label in ("a_more", "equal", "b_more", "unclassified"):
        shares = [summary["percentages"][label] for _, _, summary in cells]
        ax.barh(names, shares, left=left, color=_LABEL_COLORS[label], label=label)
        left = [l + s for l, s in zip(left, shares)]
    ax.set_xlabel("% of pairs")
    ax.set_xlim(0, 100)
    ax.invert_yaxis()
    ax.legend(loc="lower right", fontsize="small")
    ax.set_title("Empathy comparison outcomes")
    return _save(fig, path)


def fact_flow_figure(factcheck: list[dict], path: Path) -> Path:
    """Grouped bars of the five flow counts per comparison."""
    keys = ("original", "preserved", "edited", "grounded", "new")
    names = [entry["comparison"]["name"] for entry in factcheck]
    fig, ax = plt.subplots(figsize=(max(6, 2.2 * len(names)), 4.5))
    width = 0.15
    for i, key in enumerate(keys):
        values = [entry["corpus"]["flow"][key] for entry in factcheck]
        positions = [x + (i - 2) * width for x in range(len(names))]
        ax.bar(positions, values, width=width, label=key)
    ax.set_xticks(range(len(names)))
    ax.set_xticklabels(names, rotation=15, ha="right", fontsize="small")
    ax.set_ylabel("fact count")
    ax.legend(fontsize="small")
    ax.set_title("Fact flow")
    return _save(fig, path)


def length_band_figure(factcheck: list[dict], path: Path) -> Path | None:
    """Mean pair precision per response-length band, one line per comparison."""
    bands = ("short", "medium", "long")
    series = []
    for entry in factcheck:
        band_info = entry.get("bands")
        if not band_info:
            continue
        values = []
        for band in bands:
            info = band_info["bands"].get(band)
            values.append(info["precision"]["mean"] if info and info.get("n_pairs") else None)
        if any(v is not None for v in values):
            series.append((entry["comparison"]["name"], values))
    if not series:
        return None
    fig, ax = plt.subplots(figsize=(6, 4))
    for name, values in series:
        xs = [i for i, v in enumerate(values) if v is not None]
        ys = [v for v in values if v is not None]
        ax.plot(xs, ys, marker="o", label=name)
    ax.set_xticks(range(len(bands)))
    ax.set_xticklabels(bands)
    ax.set_ylabel("mean pair precision")
    ax.set_ylim(0, 1.05)
    ax.legend(fontsize="small")
    ax.set_title("Precision by response length")
    return _save(fig, path)


def sweep_figure(sweep: dict, path: Path) -> Path:
    """Micro precision and mean fact ratio across empathy levels."""
    levels = list(sweep)
    precisions = [sweep[level]["corpus"]["micro_precision"] for level in levels]
    ratios = [sweep[level].get("mean_fact_ratio") for level in levels]
    fig, ax = plt.subplots(figsize=(6, 4))
    ax.plot(levels, precisions, marker="o", color="#4c72b0", label="micro precision")
    ax.set_ylabel("micro precision", color="#4c72b0")
    ax.set_ylim(0, 1.05)
    if all(r is not None for r in ratios):
        ax2 = ax.twinx()
        ax2.plot(levels, ratios, marker="s", color="#dd8452", label="mean fact ratio")
        ax2.set_ylabel("mean fact ratio", color="#dd8452")
    ax.set_title("Empathy intensity vs factual precision")
    return _save(fig, path)


def render_figures(report: dict, out_dir: Path | str) -> list[Path]:
    """Render every figure whose section is present; returns written paths."""
    out_dir = Path(out_dir)
    written: list[Path] = []
    empathy = report.get("empathy")
    if empathy and (empathy["comparisons"] or empathy["ensembles"]):
        written.append(empathy_figure(empathy, out_dir / "empathy_comparisons.png"))
    factcheck = report.get("factcheck")
    if factcheck:
        written.append(fact_flow_figure(factcheck, out_dir / "fact_flow.png"))
        band_path = length_band_figure(factcheck, out_dir / "precision_by_length.png")
        if band_path:
            written.append(band_path)
    sweep = report.get("sweep")
    if sweep:
        written.append(sweep_figure(sweep, out_dir / "empathy_level_sweep.png"))
    return written
