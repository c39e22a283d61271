"""Command-line entry point wiring the pipeline stages together.

Exit codes: 0 on success, 2 for configuration/usage errors, 3 when a
processing stage fails. Global flags set shared run configuration; each
subcommand may override the pieces it cares about. Artifacts land in a flat
directory (default ./artifacts) so any step can be rerun or inspected in
isolation.
"""

from __future__ import annotations

import logging
import sys
from pathlib import Path

import click

from . import __version__
from . import artifacts as af
from .annotation import (
    TaskStore,
    create_app,
    create_empathy_tasks,
    create_fact_review_tasks,
    load_tokens,
)
from .corpus import classify_corpus, compute_stats, load_corpus, save_corpus
from .editor import direct_variant, edited_variant
from .emranker import aggregate_human_labels, alignment_score, judge_variant_pair
from .factcheck import category_coverage, validation_tallies
from .pipeline import (
    STAGES,
    ConfigError,
    RunConfig,
    StageError,
    build_gateway,
    load_variant_pool,
    run_factcheck_comparison,
    run_sweep,
    select_variants,
)
from .prompts import TEMPLATE_NAMES, load_all_templates, load_template, template_checksums
from .reporting import build_report, default_report_name, export_report

logger = logging.getLogger(__name__)


def _config_from_ctx(ctx: click.Context) -> RunConfig:
    return ctx.obj


def _edges_from_option(value: str | None) -> tuple[float, float] | None:
    if value is None:
        return None
    try:
        lo, hi = (float(part) for part in value.split(","))
    except ValueError as exc:
        raise click.BadParameter("expected two comma-separated numbers, e.g. 231,393") from exc
    return (lo, hi)


def _corpus_for(config: RunConfig, corpus_path: str | None):
    """Corpus from an explicit path, the configured path, or the artifact dir."""
    path = corpus_path or config.corpus_path
    if path is None:
        fallback = Path(config.artifact_dir) / af.CORPUS_FILE
        if not fallback.is_file():
            raise ConfigError(
                "no corpus given: pass --corpus, set corpus_path in the config, "
                "or run ingest first"
            )
        path = str(fallback)
    return load_corpus(path)


@click.group()
@click.version_option(version=__version__)
@click.option("--config", "config_path", type=click.Path(), default=None,
              help="JSON run-config file; flags below override it.")
@click.option("--backend", type=click.Choice(["mock", "http"]), default=None)
@click.option("--mock-script", type=click.Path(), default=None,
              help="Reply script for the mock backend.")
@click.option("--base-url", default=None, help="HTTP backend base URL.")
@click.option("--cache-dir", type=click.Path(), default=None)
@click.option("--artifact-dir", type=click.Path(), default=None)
@click.option("--parallelism", type=int, default=None)
@click.option("--seed", type=int, default=None)
@click.option("-v", "--verbose", is_flag=True, default=False)
@click.pass_context
def cli(ctx, config_path, backend, mock_script, base_url, cache_dir, artifact_dir,
        parallelism, seed, verbose):
    """Empathy-editing evaluation toolkit."""
    logging.basicConfig(
        level=logging.DEBUG if verbose else logging.INFO,
        format="%(levelname)s %(name)s: %(message)s",
        stream=sys.stderr,
    )
    config = RunConfig.from_file(config_path) if config_path else RunConfig()
    ctx.obj = config.with_overrides(
        backend=backend,
        mock_script=mock_script,
        base_url=base_url,
        cache_dir=cache_dir,
        artifact_dir=artifact_dir,
        parallelism=parallelism,
        seed=seed,
    )


@cli.command()
@click.option("--in", "in_path", required=True, type=click.Path(exists=True))
@click.option("--format", "fmt", type=click.Choice(["jsonl", "csv"]), default=None,
              help="Override the suffix-based format detection.")
@click.pass_context
def ingest(ctx, in_path, fmt):
    """Load a corpus file and store it in the artifact directory."""
    config = _config_from_ctx(ctx)
    corpus = load_corpus(in_path, fmt=fmt)
    out = Path(config.artifact_dir) / af.CORPUS_FILE
    save_corpus(out, corpus)
    af.write_json(
        Path(config.artifact_dir) / af.RUN_CONFIG_FILE,
        config.with_overrides(corpus_path=str(in_path)).to_record(),
    )
    click.echo(f"ingested {len(corpus)} exchanges -> {out}")


@cli.command()
@click.option("--corpus", "corpus_path", type=click.Path(exists=True), default=None)
@click.option("--fixed-tertiles", default=None,
              help="Fixed length-band edges as 'lower,upper' characters.")
@click.pass_context
def stats(ctx, corpus_path, fixed_tertiles):
    """Descriptive corpus statistics (words, sentences, length bands)."""
    config = _config_from_ctx(ctx)
    edges = _edges_from_option(fixed_tertiles)
    corpus = _corpus_for(config, corpus_path)
    result = compute_stats(corpus)
    band_edges = edges or config.band_edges
    result["band_edges"] = {"lower": band_edges[0], "upper": band_edges[1]}
    out = Path(config.artifact_dir) / af.STATS_FILE
    af.write_json(out, result)
    for side in ("patient_question", "physician_response"):
        words = result[side]["words"]
        sentences = result[side]["sentences"]
        click.echo(
            f"{side}: {words['mean']:.1f} ± {words['stddev']:.1f} words, "
            f"{sentences['mean']:.1f} ± {sentences['stddev']:.1f} sentences"
        )
    tertiles = result["response_length_tertiles"]
    click.echo(
        f"response length tertiles: {tertiles['lower']:.1f} / {tertiles['upper']:.1f} chars"
        f" (bands use {band_edges[0]:g}/{band_edges[1]:g})"
    )
    click.echo(f"wrote {out}")


@cli.command()
@click.option("--corpus", "corpus_path", type=click.Path(exists=True), default=None)
@click.option("--model", "model_id", default=None)
@click.pass_context
def classify(ctx, corpus_path, model_id):
    """Label each question as answerable from general knowledge or not."""
    config = _config_from_ctx(ctx)
    corpus = _corpus_for(config, corpus_path)
    gateway = build_gateway(config)
    model = model_id or config.classify_model or config.edit_model
    rows = classify_corpus(gateway, load_template("classify"), corpus, model)
    out = Path(config.artifact_dir) / af.CLASSIFY_FILE
    af.write_jsonl(out, rows)
    counts: dict[str, int] = {}
    for row in rows:
        counts[row["question_type"]] = counts.get(row["question_type"], 0) + 1
    total = len(rows)
    for label in sorted(counts):
        click.echo(f"{label}: {counts[label]} ({100.0 * counts[label] / total:.1f}%)")
    click.echo(f"wrote {out}")


@cli.command()
@click.option("--corpus", "corpus_path", type=click.Path(exists=True), default=None)
@click.option("--model", "model_id", default=None)
@click.option("--mode", type=click.Choice(["simple", "refined"]), multiple=True,
              default=("simple",))
@click.option("--level", type=click.Choice(["standard", "high", "extreme"]),
              multiple=True, default=("standard",),
              help="Empathy level(s); levels beyond standard apply to simple mode.")
@click.pass_context
def edit(ctx, corpus_path, model_id, mode, level):
    """Rewrite physician responses for empathy."""
    config = _config_from_ctx(ctx)
    corpus = _corpus_for(config, corpus_path)
    gateway = build_gateway(config)
    model = model_id or config.edit_model
    templates = load_all_templates()
    rows = []
    for m in mode:
        template = templates["simple_edit" if m == "simple" else "refined_edit"]
        levels = level if m == "simple" else ("standard",)
        for lv in levels:
            for exchange in corpus:
                rows.append(
                    edited_variant(
                        gateway, template, exchange, model, mode=m, level=lv,
                        max_tokens=config.max_tokens,
                    ).to_record()
                )
    out = Path(config.artifact_dir) / af.EDITED_VARIANTS_FILE
    af.write_jsonl(out, rows)
    click.echo(f"wrote {len(rows)} edited variants -> {out}")


@cli.command()
@click.option("--corpus", "corpus_path", type=click.Path(exists=True), default=None)
@click.option("--model", "model_id", default=None)
@click.pass_context
def generate(ctx, corpus_path, model_id):
    """Answer each patient question from scratch (no physician draft)."""
    config = _config_from_ctx(ctx)
    corpus = _corpus_for(config, corpus_path)
    gateway = build_gateway(config)
    model = model_id or config.generate_model or config.edit_model
    template = load_template("direct_generate")
    rows = [
        direct_variant(gateway, template, e, model, max_tokens=config.max_tokens).to_record()
        for e in corpus
    ]
    out = Path(config.artifact_dir) / af.DIRECT_VARIANTS_FILE
    af.write_jsonl(out, rows)
    click.echo(f"wrote {len(rows)} direct variants -> {out}")


@cli.command()
@click.option("--corpus", "corpus_path", type=click.Path(exists=True), default=None)
@click.option("--a", "spec_a", default="physician", help="First variant spec (provenance[:model]).")
@click.option("--b", "spec_b", default="edited_simple", help="Second variant spec.")
@click.option("--judge", "judges", multiple=True, default=None,
              help="Judge model id(s); repeatable.")
@click.option("--append", is_flag=True, default=False,
              help="Append to existing judgments instead of overwriting.")
@click.pass_context
def rank(ctx, corpus_path, spec_a, spec_b, judges, append):
    """Three-way empathy comparison of two variant sets, order-debiased."""
    config = _config_from_ctx(ctx)
    corpus = _corpus_for(config, corpus_path)
    gateway = build_gateway(config)
    judge_models = tuple(judges) or config.judge_models
    pool = load_variant_pool(Path(config.artifact_dir), corpus)
    variants_a = select_variants(pool, spec_a)
    variants_b = select_variants(pool, spec_b)
    by_id = {e.exchange_id: e for e in corpus}
    common = sorted(set(variants_a) & set(variants_b) & set(by_id))
    if not common:
        raise ConfigError(f"no common exchanges for {spec_a!r} vs {spec_b!r}")
    rows = []
    out = Path(config.artifact_dir) / af.JUDGMENTS_FILE
    if append and out.is_file():
        rows.extend(af.load_jsonl(out))
    for judge in judge_models:
        for exchange_id in common:
            judgment = judge_variant_pair(
                gateway, load_template("emrank3"), judge,
                by_id[exchange_id], variants_a[exchange_id], variants_b[exchange_id],
            )
            rows.append(judgment.to_record())
    af.write_jsonl(out, rows)
    click.echo(
        f"judged {len(common)} pairs with {len(judge_models)} judge(s) -> {out}"
    )


@cli.command()
@click.option("--judgments", "judgments_path", type=click.Path(exists=True), default=None,
              help="Judgment rows (defaults to the artifact directory's).")
@click.option("--human", "human_path", required=True, type=click.Path(exists=True),
              help="Human label rows (annotation export).")
@click.option("--judge", "judge_model", default=None,
              help="Judge model to score (needed when several are present).")
@click.option("--a", "prov_a", default=None, help="Filter judgments by provenance_a.")
@click.option("--b", "prov_b", default=None, help="Filter judgments by provenance_b.")
@click.pass_context
def align(ctx, judgments_path, human_path, judge_model, prov_a, prov_b):
    """Exact-match agreement between model judgments and human labels."""
    config = _config_from_ctx(ctx)
    path = Path(judgments_path) if judgments_path else Path(config.artifact_dir) / af.JUDGMENTS_FILE
    if not path.is_file():
        raise ConfigError(f"judgments file not found: {path}")
    rows = af.load_jsonl(path)
    if prov_a:
        rows = [r for r in rows if r["provenance_a"] == prov_a]
    if prov_b:
        rows = [r for r in rows if r["provenance_b"] == prov_b]
    judges = sorted({r["judge_model"] for r in rows})
    if judge_model:
        rows = [r for r in rows if r["judge_model"] == judge_model]
    elif len(judges) > 1:
        raise ConfigError(f"several judges present ({', '.join(judges)}); pass --judge")
    comparisons = sorted({(r["provenance_a"], r["provenance_b"]) for r in rows})
    if len(comparisons) > 1:
        names = ", ".join(f"{a} vs {b}" for a, b in comparisons)
        raise ConfigError(f"several comparisons present ({names}); pass --a/--b")
    if not rows:
        raise ConfigError("no judgment rows left after filtering")
    predicted = {r["exchange_id"]: r["label"] for r in rows}
    human = aggregate_human_labels(af.load_jsonl(human_path))
    result = alignment_score(predicted, human)
    out = Path(config.artifact_dir) / af.ALIGNMENT_FILE
    payload = result.to_record()
    payload.update(
        {
            "judge_model": rows[0]["judge_model"],
            "provenance_a": comparisons[0][0],
            "provenance_b": comparisons[0][1],
            "judgments_file": path.name,
            "human_labels_file": Path(human_path).name,
        }
    )
    af.write_json(out, payload)
    click.echo(f"alignment {result.matched}/{result.total} = {result.score:.2f}")
    click.echo(f"wrote {out}")


@cli.group(invoke_without_command=True)
@click.option("--corpus", "corpus_path", type=click.Path(exists=True), default=None)
@click.option("--original", "original_spec", default="physician",
              help="Original variant spec (provenance[:model]).")
@click.option("--edited", "edited_spec", default="edited_simple",
              help="Edited variant spec (provenance[:model]).")
@click.option("--model", "model_id", default=None,
              help="Extraction/entailment model id.")
@click.option("--edge-rule", type=click.Choice(["paper", "vacuous"]), default=None)
@click.option("--no-dedup", is_flag=True, default=False,
              help="Keep duplicate extracted facts (sensitivity analysis).")
@click.pass_context
def factcheck(ctx, corpus_path, original_spec, edited_spec, model_id, edge_rule, no_dedup):
    """Bidirectional factual-consistency scoring of edited responses."""
    config = _config_from_ctx(ctx).with_overrides(
        factcheck_model=model_id,
        edge_rule=edge_rule,
        dedup=False if no_dedup else None,
        corpus_path=corpus_path,
    )
    ctx.obj = config
    if ctx.invoked_subcommand is not None:
        return
    corpus = _corpus_for(config, corpus_path)
    gateway = build_gateway(config)
    payload = run_factcheck_comparison(
        config, Path(config.artifact_dir), gateway, original_spec, edited_spec, corpus
    )
    summary = payload["corpus"]
    flow = summary["flow"]
    click.echo(
        f"{payload['comparison']['name']}: micro recall {summary['micro_recall']:.2f}, "
        f"micro precision {summary['micro_precision']:.2f}, "
        f"loss {100 * summary['loss_rate']:.1f}%, "
        f"hallucination {100 * summary['hallucination_rate']:.1f}%"
    )
    click.echo(
        f"facts: original {flow['original']}, preserved {flow['preserved']}, "
        f"edited {flow['edited']}, grounded {flow['grounded']}, new {flow['new']}"
    )


@factcheck.command()
@click.option("--levels", default="standard,high,extreme",
              help="Comma-separated empathy levels to sweep.")
@click.pass_context
def sweep(ctx, levels):
    """Re-edit at increasing empathy intensity and fact-check each level."""
    config = _config_from_ctx(ctx)
    level_list = tuple(part.strip() for part in levels.split(",") if part.strip())
    config = config.with_overrides(sweep_levels=level_list)
    corpus = _corpus_for(config, None)
    gateway = build_gateway(config)
    result = run_sweep(config, Path(config.artifact_dir), gateway, corpus)
    for level, entry in result.items():
        ratio = entry.get("mean_fact_ratio")
        shown = f"{ratio:.2f}" if ratio is not None else "n/a"
        click.echo(
            f"{level}: micro precision {entry['corpus']['micro_precision']:.2f}, "
            f"mean fact ratio {shown}"
        )
    click.echo(f"wrote {Path(config.artifact_dir) / af.SWEEP_FILE}")


@factcheck.command()
@click.option("--reviews", "reviews_path", required=True, type=click.Path(exists=True),
              help="Fact-review export rows (direction + confirmed).")
@click.pass_context
def validate(ctx, reviews_path):
    """Precision of automated flags against human review."""
    config = _config_from_ctx(ctx)
    tallies = validation_tallies(af.load_jsonl(reviews_path))
    out = Path(config.artifact_dir) / af.VALIDATION_FILE
    af.write_json(out, tallies)
    for direction in sorted(tallies):
        entry = tallies[direction]
        pct = entry["precision_percent"]
        shown = f"{pct:.1f}%" if pct is not None else "n/a"
        click.echo(f"{direction}: {entry['confirmed']}/{entry['flagged']} confirmed ({shown})")
    click.echo(f"wrote {out}")


@factcheck.command()
@click.option("--expert", "expert_path", required=True, type=click.Path(exists=True),
              help="Expert (response_id, category) flag rows.")
@click.option("--mapped", "mapped_path", required=True, type=click.Path(exists=True),
              help="(response_id, category) rows for pipeline-extracted facts.")
@click.pass_context
def coverage(ctx, expert_path, mapped_path):
    """Per-category coverage of expert-flagged fabrications."""
    config = _config_from_ctx(ctx)
    result = category_coverage(af.load_jsonl(expert_path), af.load_jsonl(mapped_path))
    out = Path(config.artifact_dir) / af.COVERAGE_FILE
    af.write_json(out, result)
    overall = result["overall"]
    click.echo(
        f"overall coverage {overall['detected']}/{overall['flagged']}"
        + (f" ({overall['coverage_percent']:.2f}%)" if overall["coverage_percent"] is not None else "")
    )
    click.echo(f"wrote {out}")


@cli.command()
@click.option("--dir", "artifact_dir", type=click.Path(exists=True), default=None,
              help="Artifact directory to report on.")
@click.option("--format", "fmt", type=click.Choice(["md", "csv", "json"]), default="md")
@click.option("--out", "out_path", type=click.Path(), default=None)
@click.option("--figures/--no-figures", default=True,
              help="Also render figures next to the report.")
@click.option("--figures-dir", type=click.Path(), default=None)
@click.pass_context
def report(ctx, artifact_dir, fmt, out_path, figures, figures_dir):
    """Assemble the evaluation report from stored artifacts."""
    from .figures import render_figures

    config = _config_from_ctx(ctx)
    directory = Path(artifact_dir) if artifact_dir else Path(config.artifact_dir)
    result = build_report(directory)
    out = Path(out_path) if out_path else directory / default_report_name(fmt)
    export_report(result, fmt, out)
    click.echo(f"wrote {out}")
    if figures:
        fig_dir = Path(figures_dir) if figures_dir else out.parent / "figures"
        written = render_figures(result, fig_dir)
        for path in written:
            click.echo(f"wrote {path}")
    for note in result.get("notes") or []:
        click.echo(f"note: {note}")


@cli.group()
def prompts():
    """Inspect the bundled prompt templates."""


@prompts.command("list")
def prompts_list():
    for name in TEMPLATE_NAMES:
        click.echo(name)


@prompts.command("show")
@click.argument("name")
def prompts_show(name):
    try:
        template = load_template(name)
    except Exception as exc:
        raise click.ClickException(str(exc)) from exc
    click.echo(template.body, nl=False)


@prompts.command("checksum")
@click.argument("name", required=False)
def prompts_checksum(name):
    checksums = template_checksums()
    if name:
        if name not in checksums:
            raise click.ClickException(f"unknown template {name!r}")
        click.echo(f"{checksums[name]}  {name}")
        return
    for template_name, checksum in sorted(checksums.items()):
        click.echo(f"{checksum}  {template_name}")


@cli.group()
def annotate():
    """Human annotation: build task batches and serve them over HTTP."""


@annotate.command("make-tasks")
@click.option("--kind", type=click.Choice(["empathy_pair", "fact_review"]), required=True)
@click.option("--tasks", "tasks_dir", required=True, type=click.Path())
@click.option("--corpus", "corpus_path", type=click.Path(exists=True), default=None)
@click.option("--a", "spec_a", default="physician", help="empathy_pair: first variant spec.")
@click.option("--b", "spec_b", default="edited_simple", help="empathy_pair: second variant spec.")
@click.option("--original", "original_spec", default="physician",
              help="fact_review: original variant spec.")
@click.option("--edited", "edited_spec", default="edited_simple",
              help="fact_review: edited variant spec.")
@click.option("--task-seed", type=int, default=None,
              help="Display-order seed (defaults to the run seed).")
@click.pass_context
def annotate_make_tasks(ctx, kind, tasks_dir, corpus_path, spec_a, spec_b,
                        original_spec, edited_spec, task_seed):
    """Create an annotation task batch from pipeline artifacts."""
    config = _config_from_ctx(ctx)
    corpus = _corpus_for(config, corpus_path)
    pool = load_variant_pool(Path(config.artifact_dir), corpus)
    store = TaskStore(tasks_dir)
    seed = task_seed if task_seed is not None else config.seed
    if kind == "empathy_pair":
        tasks = create_empathy_tasks(
            corpus, select_variants(pool, spec_a), select_variants(pool, spec_b), seed
        )
    else:
        slug = af.comparison_slug(original_spec, edited_spec)
        entailments_path = Path(config.artifact_dir) / af.entailments_file(slug)
        if not entailments_path.is_file():
            raise ConfigError(
                f"{entailments_path.name} not found; run factcheck for this comparison first"
            )
        originals = select_variants(pool, original_spec)
        editeds = select_variants(pool, edited_spec)
        flagged = []
        for row in af.load_jsonl(entailments_path):
            if row["prediction"] == 1:
                continue
            exchange_id = row["exchange_id"]
            if exchange_id not in originals or exchange_id not in editeds:
                continue
            flagged.append(
                {
                    "exchange_id": exchange_id,
                    "direction": row["direction"],
                    "fact": row["hypothesis"],
                    "original_text": originals[exchange_id].text,
                    "edited_text": editeds[exchange_id].text,
                }
            )
        tasks = create_fact_review_tasks(flagged)
    store.add_tasks(tasks)
    click.echo(f"created {len(tasks)} {kind} task(s) in {tasks_dir}")


@annotate.command("serve")
@click.option("--port", type=int, default=8400)
@click.option("--host", default="127.0.0.1")
@click.option("--tasks", "tasks_dir", required=True, type=click.Path())
@click.option("--tokens", "tokens_path", type=click.Path(exists=True), default=None,
              help="JSON map of annotator id to bearer token; omits auth when absent.")
@click.option("--static", "static_dir", type=click.Path(exists=True), default=None,
              help="Directory of UI assets to serve at /.")
def annotate_serve(port, host, tasks_dir, tokens_path, static_dir):
    """Serve annotation tasks over HTTP."""
    import uvicorn

    store = TaskStore(tasks_dir)
    app = create_app(store, tokens=load_tokens(tokens_path), static_dir=static_dir)
    click.echo(f"serving {len(store.tasks)} task(s) on http://{host}:{port}")
    uvicorn.run(app, host=host, port=port, log_level="warning")


@cli.command()
@click.option("--corpus", "corpus_path", type=click.Path(exists=True), default=None)
@click.option("--stages", "stages_option", default=None,
              help="Comma-separated subset of: " + ", ".join(STAGES))
@click.pass_context
def run(ctx, corpus_path, stages_option):
    """Run the staged pipeline end to end (or a subset of stages)."""
    from .pipeline import run_pipeline

    config = _config_from_ctx(ctx).with_overrides(corpus_path=corpus_path)
    stages = None
    if stages_option:
        stages = [part.strip() for part in stages_option.split(",") if part.strip()]
    artifact_dir = run_pipeline(config, stages)
    click.echo(f"pipeline complete -> {artifact_dir}")


def main(argv: list[str] | None = None) -> None:
    try:
        cli.main(args=argv, standalone_mode=False)
    except click.exceptions.Exit as exc:
        sys.exit(exc.exit_code)
    except click.Abort:
        sys.exit(130)
    except click.ClickException as exc:
        exc.show()
        sys.exit(2)
    except ConfigError as exc:
        click.echo(f"config error: {exc}", err=True)
        sys.exit(2)
    except StageError as exc:
        click.echo(str(exc), err=True)
        sys.exit(3)
    except Exception as exc:  # tool failures map to the stage-failure code
        logger.debug("unhandled error", exc_info=True)
        click.echo(f"error: {exc}", err=True)
        sys.exit(3)


if __name__ == "__main__":
    main()
