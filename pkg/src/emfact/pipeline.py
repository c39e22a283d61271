"""Run configuration and the staged evaluation pipeline.

A RunConfig captures everything a run depends on (paths, backend, models,
flags); it is serialized into the artifact directory so every number in a
report traces back to the exact configuration. Stages run sequentially in a
fixed order, each owning its own artifact files, so rerunning one stage
never disturbs another's outputs and a failed run resumes from the stage
that broke. With a warm cache a rerun reproduces identical artifact bytes.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Mapping, Sequence

from . import artifacts as af
from .corpus import (
    DEFAULT_BAND_EDGES,
    QAExchange,
    classify_corpus,
    compute_stats,
    load_corpus,
    save_corpus,
)
from .editor import (
    EDIT_MODES,
    ResponseVariant,
    direct_variant,
    edited_variant,
    physician_variant,
)
from .emranker import judge_variant_pair
from .factcheck import (
    EDGE_RULES,
    empathy_level_sweep,
    evaluate_pair,
    fact_ratio_analysis,
    score_corpus,
)
from .gateway import (
    Gateway,
    GatewayConfigError,
    HttpBackend,
    ResponseCache,
    load_mock_script,
)
from .prompts import EMPATHY_LEVELS, load_all_templates, template_checksums
from .reporting import build_report, export_report
from .figures import render_figures

logger = logging.getLogger(__name__)

STAGES = ("ingest", "stats", "classify", "edit", "generate", "rank", "factcheck", "report")

BACKENDS = ("mock", "http")


class ConfigError(ValueError):
    """Invalid run configuration; the CLI maps this to exit code 2."""


class StageError(RuntimeError):
    """A pipeline stage failed; carries the stage name for exit reporting."""

    def __init__(self, stage: str, message: str):
        super().__init__(f"stage {stage!r} failed: {message}")
        self.stage = stage


@dataclass(frozen=True)
class RunConfig:
    corpus_path: str | None = None
    artifact_dir: str = "artifacts"
    cache_dir: str | None = None
    backend: str = "mock"
    mock_script: str | None = None
    base_url: str | None = None
    parallelism: int = 4
    seed: int = 0
    run_timestamp: str | None = None
    temperature: float = 0.0
    max_tokens: int = 1024
    edit_model: str = "edit-model"
    generate_model: str | None = None
    classify_model: str | None = None
    judge_models: tuple[str, ...] = ("judge-model",)
    factcheck_model: str = "factcheck-model"
    edit_modes: tuple[str, ...] = ("simple",)
    edit_levels: tuple[str, ...] = ("standard",)
    comparisons: tuple[tuple[str, str], ...] = (("physician", "edited_simple"),)
    factcheck_pairs: tuple[tuple[str, str], ...] = (("physician", "edited_simple"),)
    sweep_levels: tuple[str, ...] = EMPATHY_LEVELS
    band_edges: tuple[float, float] = DEFAULT_BAND_EDGES
    edge_rule: str = "paper"
    dedup: bool = True
    figures: bool = True

    def validate(self) -> None:
        if self.backend not in BACKENDS:
            raise ConfigError(f"unknown backend {self.backend!r} (expected one of {BACKENDS})")
        if self.backend == "mock" and not self.mock_script:
            raise ConfigError("mock backend needs mock_script")
        if self.parallelism < 1:
            raise ConfigError("parallelism must be >= 1")
        if self.edge_rule not in EDGE_RULES:
            raise ConfigError(f"unknown edge_rule {self.edge_rule!r}")
        for mode in self.edit_modes:
            if mode not in EDIT_MODES:
                raise ConfigError(f"unknown edit mode {mode!r}")
        for level in tuple(self.edit_levels) + tuple(self.sweep_levels):
            if level not in EMPATHY_LEVELS:
                raise ConfigError(f"unknown empathy level {level!r}")
        if not self.judge_models:
            raise ConfigError("at least one judge model required")
        if len(self.band_edges) != 2 or self.band_edges[0] > self.band_edges[1]:
            raise ConfigError(f"band_edges out of order: {self.band_edges}")

    def to_record(self) -> dict:
        return {
            "corpus_path": self.corpus_path,
            "artifact_dir": self.artifact_dir,
            "cache_dir": self.cache_dir,
            "backend": self.backend,
            "mock_script": self.mock_script,
            "base_url": self.base_url,
            "parallelism": self.parallelism,
            "seed": self.seed,
            "run_timestamp": self.run_timestamp,
            "temperature": self.temperature,
            "max_tokens": self.max_tokens,
            "edit_model": self.edit_model,
            "generate_model": self.generate_model,
            "classify_model": self.classify_model,
            "judge_models": list(self.judge_models),
            "factcheck_model": self.factcheck_model,
            "edit_modes": list(self.edit_modes),
            "edit_levels": list(self.edit_levels),
            "comparisons": [list(pair) for pair in self.comparisons],
            "factcheck_pairs": [list(pair) for pair in self.factcheck_pairs],
            "sweep_levels": list(self.sweep_levels),
            "band_edges": list(self.band_edges),
            "edge_rule": self.edge_rule,
            "dedup": self.dedup,
            "figures": self.figures,
        }

    @classmethod
    def from_record(cls, record: Mapping) -> "RunConfig":
        known = {f.name for f in cls.__dataclass_fields__.values()}  # type: ignore[attr-defined]
        unknown = set(record) - known
        if unknown:
            raise ConfigError(f"unknown config key(s): {sorted(unknown)}")
        kwargs = dict(record)
        for key in ("judge_models", "edit_modes", "edit_levels", "sweep_levels"):
            if key in kwargs and kwargs[key] is not None:
                kwargs[key] = tuple(kwargs[key])
        for key in ("comparisons", "factcheck_pairs"):
            if key in kwargs and kwargs[key] is not None:
                kwargs[key] = tuple((pair[0], pair[1]) for pair in kwargs[key])
        if "band_edges" in kwargs and kwargs["band_edges"] is not None:
            kwargs["band_edges"] = tuple(kwargs["band_edges"])
        config = cls(**kwargs)
        return config

    @classmethod
    def from_file(cls, path: Path | str) -> "RunConfig":
        try:
            record = af.load_json(path)
        except FileNotFoundError as exc:
            raise ConfigError(f"config file not found: {path}") from exc
        except ValueError as exc:
            raise ConfigError(f"config file {path} is not valid JSON: {exc}") from exc
        if not isinstance(record, Mapping):
            raise ConfigError(f"config file {path} must hold a JSON object")
        return cls.from_record(record)

    def with_overrides(self, **kwargs) -> "RunConfig":
        provided = {k: v for k, v in kwargs.items() if v is not None}
        return replace(self, **provided) if provided else self


def build_gateway(config: RunConfig) -> Gateway:
    config.validate()
    if config.backend == "mock":
        backend = load_mock_script(config.mock_script)
    else:
        try:
            backend = HttpBackend(base_url=config.base_url)
        except GatewayConfigError as exc:
            raise ConfigError(str(exc)) from exc
    cache = ResponseCache(config.cache_dir) if config.cache_dir else None
    return Gateway(backend, cache=cache, parallelism=config.parallelism)


def _artifact_dir(config: RunConfig) -> Path:
    path = Path(config.artifact_dir)
    path.mkdir(parents=True, exist_ok=True)
    return path


def _require(path: Path, producer: str) -> Path:
    if not path.is_file():
        raise FileNotFoundError(f"{path.name} not found; run the {producer} stage first")
    return path


def _load_artifact_corpus(artifact_dir: Path) -> list[QAExchange]:
    return load_corpus(_require(artifact_dir / af.CORPUS_FILE, "ingest"))


def load_variant_pool(
    artifact_dir: Path, corpus: Sequence[QAExchange]
) -> dict[tuple[str, str], list[ResponseVariant]]:
    """All known variants keyed by (provenance, exchange_id). Physician
    variants are synthesized from the corpus rather than stored."""
    pool: dict[tuple[str, str], list[ResponseVariant]] = {}

    def add(variant: ResponseVariant) -> None:
        pool.setdefault((variant.provenance, variant.exchange_id), []).append(variant)

    for exchange in corpus:
        add(physician_variant(exchange))
    for filename in (af.EDITED_VARIANTS_FILE, af.DIRECT_VARIANTS_FILE):
        path = artifact_dir / filename
        if path.is_file():
            for record in af.load_jsonl(path):
                add(ResponseVariant.from_record(record))
    return pool


def select_variants(
    pool: Mapping[tuple[str, str], list[ResponseVariant]], spec: str
) -> dict[str, ResponseVariant]:
    """Resolve a 'provenance' or 'provenance:model' spec to one variant per
    exchange; ambiguity (several models, no model filter) is an error."""
    provenance, _, model = spec.partition(":")
    out: dict[str, ResponseVariant] = {}
    for (prov, exchange_id), variants in pool.items():
        if prov != provenance:
            continue
        candidates = [v for v in variants if not model or v.model_id == model]
        if not candidates:
            continue
        if len(candidates) > 1:
            models = sorted(v.model_id for v in candidates)
            raise ValueError(
                f"variant spec {spec!r} is ambiguous for exchange {exchange_id!r} "
                f"(models: {', '.join(models)}); use provenance:model"
            )
        out[exchange_id] = candidates[0]
    if not out:
        raise ValueError(f"no variants match spec {spec!r}")
    return out


def stage_ingest(config: RunConfig, artifact_dir: Path, gateway: Gateway | None) -> None:
    if not config.corpus_path:
        raise ConfigError("ingest needs corpus_path")
    corpus = load_corpus(config.corpus_path)
    save_corpus(artifact_dir / af.CORPUS_FILE, corpus)
    af.write_json(artifact_dir / af.RUN_CONFIG_FILE, config.to_record())


def stage_stats(config: RunConfig, artifact_dir: Path, gateway: Gateway | None) -> None:
    corpus = _load_artifact_corpus(artifact_dir)
    stats = compute_stats(corpus)
    stats["band_edges"] = {"lower": config.band_edges[0], "upper": config.band_edges[1]}
    af.write_json(artifact_dir / af.STATS_FILE, stats)


def stage_classify(config: RunConfig, artifact_dir: Path, gateway: Gateway) -> None:
    corpus = _load_artifact_corpus(artifact_dir)
    templates = load_all_templates()
    model = config.classify_model or config.edit_model
    rows = classify_corpus(gateway, templates["classify"], corpus, model)
    af.write_jsonl(artifact_dir / af.CLASSIFY_FILE, rows)


def stage_edit(config: RunConfig, artifact_dir: Path, gateway: Gateway) -> None:
    corpus = _load_artifact_corpus(artifact_dir)
    templates = load_all_templates()
    rows = []
    for mode in config.edit_modes:
        template = templates["simple_edit" if mode == "simple" else "refined_edit"]
        levels = config.edit_levels if mode == "simple" else ("standard",)
        for level in levels:
            for exchange in corpus:
                variant = edited_variant(
                    gateway, template, exchange, config.edit_model,
                    mode=mode, level=level, max_tokens=config.max_tokens,
                )
                rows.append(variant.to_record())
    af.write_jsonl(artifact_dir / af.EDITED_VARIANTS_FILE, rows)


def stage_generate(config: RunConfig, artifact_dir: Path, gateway: Gateway) -> None:
    corpus = _load_artifact_corpus(artifact_dir)
    templates = load_all_templates()
    model = config.generate_model or config.edit_model
    rows = [
        direct_variant(
            gateway, templates["direct_generate"], exchange, model,
            max_tokens=config.max_tokens,
        ).to_record()
        for exchange in corpus
    ]
    af.write_jsonl(artifact_dir / af.DIRECT_VARIANTS_FILE, rows)


def stage_rank(config: RunConfig, artifact_dir: Path, gateway: Gateway) -> None:
    exchanges = _load_artifact_corpus(artifact_dir)
    corpus = {e.exchange_id: e for e in exchanges}
    templates = load_all_templates()
    pool = load_variant_pool(artifact_dir, exchanges)
    rows = []
    for spec_a, spec_b in config.comparisons:
        variants_a = select_variants(pool, spec_a)
        variants_b = select_variants(pool, spec_b)
        common = sorted(set(variants_a) & set(variants_b))
        if not common:
            raise ValueError(f"no common exchanges for comparison {spec_a!r} vs {spec_b!r}")
        for judge in config.judge_models:
            for exchange_id in common:
                judgment = judge_variant_pair(
                    gateway, templates["emrank3"], judge,
                    corpus[exchange_id], variants_a[exchange_id], variants_b[exchange_id],
                )
                rows.append(judgment.to_record())
    af.write_jsonl(artifact_dir / af.JUDGMENTS_FILE, rows)


def run_factcheck_comparison(
    config: RunConfig,
    artifact_dir: Path,
    gateway: Gateway,
    original_spec: str,
    edited_spec: str,
    corpus: Sequence[QAExchange] | None = None,
) -> dict:
    """Evaluate one original/edited comparison and write its artifacts.

    Returns the factreport payload that was written.
    """
    templates = load_all_templates()
    if corpus is None:
        corpus = _load_artifact_corpus(artifact_dir)
    pool = load_variant_pool(artifact_dir, corpus)
    originals = select_variants(pool, original_spec)
    editeds = select_variants(pool, edited_spec)
    common = sorted(set(originals) & set(editeds))
    if not common:
        raise ValueError(
            f"no common exchanges for factcheck {original_spec!r} vs {edited_spec!r}"
        )
    evaluations = []
    fact_rows = []
    entailment_rows = []
    for exchange_id in common:
        original, edited = originals[exchange_id], editeds[exchange_id]
        evaluation = evaluate_pair(
            gateway, templates["fact_extract"], templates["entail"],
            config.factcheck_model, original, edited,
            edge_rule=config.edge_rule, dedup=config.dedup,
        )
        evaluations.append(evaluation)
        fact_rows.append(evaluation.original_facts.to_record())
        fact_rows.append(evaluation.edited_facts.to_record())
        for direction, premise_prov, verdicts in (
            ("not_preserved", edited.provenance, evaluation.recall_verdicts),
            ("added", original.provenance, evaluation.precision_verdicts),
        ):
            for verdict in verdicts:
                entailment_rows.append(
                    {
                        "exchange_id": exchange_id,
                        "direction": direction,
                        "premise_provenance": premise_prov,
                        "hypothesis": verdict.hypothesis,
                        "prediction": verdict.prediction,
                        "parse_failed": verdict.parse_failed,
                        "raw_reply": verdict.raw_reply,
                    }
                )
    corpus_report = score_corpus([e.report for e in evaluations])
    response_chars = {
        exchange_id: len(originals[exchange_id].text) for exchange_id in common
    }
    bands = fact_ratio_analysis(
        [e.report for e in evaluations], response_chars, config.band_edges
    )
    slug = af.comparison_slug(original_spec, edited_spec)
    payload = {
        "comparison": {
            "name": f"{original_spec} vs {edited_spec}",
            "original": original_spec,
            "edited": edited_spec,
            "model": config.factcheck_model,
            "edge_rule": config.edge_rule,
            "dedup": config.dedup,
            "temperature": config.temperature,
        },
        "corpus": corpus_report.to_record(),
        "pairs": [e.report.to_record() for e in evaluations],
        "bands": bands,
        "parse_failures": sum(e.n_parse_failures for e in evaluations),
        "prompt_checksums": template_checksums(),
    }
    af.write_jsonl(artifact_dir / af.facts_file(slug), fact_rows)
    af.write_jsonl(artifact_dir / af.entailments_file(slug), entailment_rows)
    af.write_json(artifact_dir / af.factreport_file(slug), payload)
    return payload


def stage_factcheck(config: RunConfig, artifact_dir: Path, gateway: Gateway) -> None:
    for original_spec, edited_spec in config.factcheck_pairs:
        run_factcheck_comparison(config, artifact_dir, gateway, original_spec, edited_spec)


def run_sweep(
    config: RunConfig,
    artifact_dir: Path,
    gateway: Gateway,
    corpus: Sequence[QAExchange] | None = None,
) -> dict:
    if corpus is None:
        corpus = _load_artifact_corpus(artifact_dir)
    templates = load_all_templates()
    sweep = empathy_level_sweep(
        gateway,
        templates["simple_edit"],
        templates["fact_extract"],
        templates["entail"],
        corpus,
        edit_model=config.edit_model,
        check_model=config.factcheck_model,
        levels=config.sweep_levels,
        edge_rule=config.edge_rule,
        dedup=config.dedup,
    )
    af.write_json(artifact_dir / af.SWEEP_FILE, sweep)
    return sweep


def stage_report(config: RunConfig, artifact_dir: Path, gateway: Gateway | None) -> None:
    report = build_report(artifact_dir)
    for fmt, name in (
        ("json", af.REPORT_JSON_FILE),
        ("md", af.REPORT_MD_FILE),
        ("csv", af.REPORT_CSV_FILE),
    ):
        export_report(report, fmt, artifact_dir / name)
    if config.figures:
        render_figures(report, artifact_dir / "figures")


_STAGE_FUNCS = {
    "ingest": stage_ingest,
    "stats": stage_stats,
    "classify": stage_classify,
    "edit": stage_edit,
    "generate": stage_generate,
    "rank": stage_rank,
    "factcheck": stage_factcheck,
    "report": stage_report,
}

# Stages that never talk to a model backend.
_OFFLINE_STAGES = {"ingest", "stats", "report"}


def run_pipeline(config: RunConfig, stages: Sequence[str] | None = None) -> Path:
    """Run the requested stages in canonical order; returns the artifact dir.

    Unknown stage names are a config error. A stage failure raises
    StageError naming the stage; artifacts of completed stages stay on disk
    so the run can resume from the failure point.
    """
    config.validate()
    requested = list(stages) if stages is not None else list(STAGES)
    unknown = [s for s in requested if s not in STAGES]
    if unknown:
        raise ConfigError(f"unknown stage(s): {', '.join(unknown)}")
    ordered = [s for s in STAGES if s in requested]
    artifact_dir = _artifact_dir(config)
    gateway: Gateway | None = None
    for stage in ordered:
        if stage not in _OFFLINE_STAGES and gateway is None:
            gateway = build_gateway(config)
        logger.info("stage %s starting", stage)
        try:
            _STAGE_FUNCS[stage](config, artifact_dir, gateway)
        except ConfigError:
            raise
        except Exception as exc:
            raise StageError(stage, str(exc)) from exc
        logger.info("stage %s done", stage)
    return artifact_dir
