"""Operator command line: ingest -> filter-census -> index -> train -> tag ->
aggregate / report-thresholds, plus task management and the API server.

Every stage reads and writes files, is re-runnable, and is deterministic
given fixed seeds. Exit codes: 0 success, 1 usage error, 2 data error.
Default paths resolve against $STATUTE_HOME when set.
"""

from __future__ import annotations

import json
import os
import sys
from pathlib import Path

import click

from . import analytics, annotation, crf, ingest, search
from .analytics import ParagraphAnnotation, TaggedLaw
from .annotation import AnnotationService, FileStore, UiConfig
from .model import (
    CorpusError,
    DiscourseLabel,
    snap_spans_to_tokens,
    spans_to_bio,
    tokenize,
)


def _resolve(path: str) -> Path:
    base = os.environ.get("STATUTE_HOME")
    p = Path(path)
    if base and not p.is_absolute():
        return Path(base) / p
    return p


@click.group()
def cli():
    """Statute corpus tools: search, discourse tagging, annotation collection."""


@cli.command("ingest")
@click.option("--in", "in_path", required=True, help="raw statute records, one JSON per line")
@click.option("--out", "out_path", required=True, help="corpus file to write")
def cmd_ingest(in_path, out_path):
    """Parse raw statute records into the corpus format.

    Each input line: {"state", "citation", "text", "heading"?, "source_url"?,
    "retrieved_at"?}.
    """
    docs = []
    with open(_resolve(in_path), "r", encoding="utf-8") as f:
        for line_no, line in enumerate(f, start=1):
            if not line.strip():
                continue
            try:
                raw = json.loads(line)
                docs.append(
                    ingest.parse_statute(
                        raw["text"],
                        raw["state"],
                        raw["citation"],
                        heading=raw.get("heading", ""),
                        source_url=raw.get("source_url", ""),
                        retrieved_at=raw.get("retrieved_at"),
                    )
                )
            except (json.JSONDecodeError, KeyError, ingest.IngestError) as e:
                raise ingest.MalformedLine(line_no, str(e)) from e
    ingest.write_corpus(docs, _resolve(out_path))
    click.echo(f"ingested {len(docs)} documents")


@cli.command("filter-census")
@click.option("--in", "in_path", required=True)
@click.option("--out", "out_path", required=True)
@click.option("--keywords", "keywords_path", default=None, help="census keyword config JSON")
@click.option("--only-matching", is_flag=True, help="drop documents with no census paragraph")
def cmd_filter_census(in_path, out_path, keywords_path, only_matching):
    """Flag census-related paragraphs (and optionally filter documents)."""
    config = (
        ingest.CensusKeywordConfig.load(_resolve(keywords_path))
        if keywords_path
        else ingest.CensusKeywordConfig()
    )
    docs = [
        ingest.flag_census_paragraphs(doc, config)
        for doc in ingest.load_corpus(_resolve(in_path))
    ]
    if only_matching:
        docs = [d for d in docs if any(p.census_related for p in d.paragraphs)]
    ingest.write_corpus(docs, _resolve(out_path))
    flagged = sum(p.census_related for d in docs for p in d.paragraphs)
    click.echo(f"wrote {len(docs)} documents, {flagged} census paragraphs")


@cli.command("index")
@click.option("--in", "in_path", required=True)
@click.option("--out", "out_path", required=True)
def cmd_index(in_path, out_path):
    """Build the search index from a corpus file."""
    index = search.build_index(ingest.load_corpus(_resolve(in_path)))
    search.save_index(index, _resolve(out_path))
    click.echo(f"indexed {index.doc_count} documents")


def _gold_dataset(tagged_laws):
    dataset = []
    for law in tagged_laws:
        for ann in law.annotations:
            text = law.doc.paragraphs[ann.paragraph_index].text
            tokens = tokenize(text)
            if not tokens:
                continue
            spans = snap_spans_to_tokens(text, tokens, list(ann.spans))
            dataset.append((tokens, spans_to_bio(tokens, spans)))
    return dataset


@cli.command("train")
@click.option("--in", "in_path", required=True, help="gold-annotated tagged corpus")
@click.option("--out", "out_path", required=True, help="model file to write")
@click.option("--epochs", default=25, show_default=True)
@click.option("--learning-rate", default=0.1, show_default=True)
@click.option("--l2", default=0.01, show_default=True)
@click.option("--seed", default=0, show_default=True)
@click.option("--verbose", is_flag=True)
def cmd_train(in_path, out_path, epochs, learning_rate, l2, seed, verbose):
    """Train the CRF tagger on gold span annotations."""
    dataset = _gold_dataset(analytics.load_tagged(_resolve(in_path)))
    config = crf.TrainConfig(
        l2_lambda=l2,
        learning_rate=learning_rate,
        epochs=epochs,
        seed=seed,
        verbose=verbose,
    )
    model = crf.train(dataset, config)
    crf.save_model(model, _resolve(out_path))
    click.echo(f"trained on {len(dataset)} paragraphs -> {out_path}")


@cli.command("tag")
@click.option("--model", "model_path", required=True)
@click.option("--in", "in_path", required=True)
@click.option("--out", "out_path", required=True)
def cmd_tag(model_path, in_path, out_path):
    """Tag every paragraph of a corpus with model spans."""
    model = crf.load_model(_resolve(model_path))
    tagged = []
    for doc in ingest.load_corpus(_resolve(in_path)):
        annotations = tuple(
            ParagraphAnnotation(
                paragraph_index=p.index,
                provenance="model",
                spans=tuple(crf.tag_paragraph(model, p.text)),
            )
            for p in doc.paragraphs
        )
        tagged.append(TaggedLaw(doc=doc, annotations=annotations))
    analytics.write_tagged(tagged, _resolve(out_path))
    total = sum(len(a.spans) for law in tagged for a in law.annotations)
    click.echo(f"tagged {len(tagged)} documents, {total} spans")


@cli.command("aggregate")
@click.option("--in", "in_path", required=True, help="tagged corpus")
@click.option("--label", required=True, type=click.Choice([l.name for l in DiscourseLabel]))
@click.option("--out", "out_path", default=None, help="write JSON instead of a table")
def cmd_aggregate(in_path, label, out_path):
    """Aggregate tagged spans of one label corpus-wide."""
    groups = analytics.aggregate_spans(
        analytics.load_tagged(_resolve(in_path)), DiscourseLabel[label]
    )
    if out_path:
        with open(_resolve(out_path), "w", encoding="utf-8") as f:
            json.dump(
                [
                    {
                        "label": g.label.name,
                        "normalized_text": g.normalized_text,
                        "count": g.count,
                        "law_ids": sorted(g.law_ids),
                    }
                    for g in groups
                ],
                f, ensure_ascii=False, sort_keys=True, indent=2,
            )
            f.write("\n")
    else:
        click.echo(f"{'count':>6}  {label}")
        for g in groups:
            click.echo(f"{g.count:>6}  {g.normalized_text}")


@cli.command("report-thresholds")
@click.option("--in", "in_path", required=True, help="tagged corpus")
@click.option("--state", default=None)
@click.option("--as-json", is_flag=True)
def cmd_report_thresholds(in_path, state, as_json):
    """Population-threshold width report over TEST spans."""
    report = analytics.threshold_width_report(
        analytics.load_tagged(_resolve(in_path)), state_filter=state
    )
    if as_json:
        click.echo(json.dumps(report.to_dict(), sort_keys=True))
        return
    click.echo(f"laws considered:            {report.total_laws}")
    click.echo(f"laws with bounded interval: {report.total_with_bounded_interval}")
    for width, frac in sorted(report.frac_width_lt.items()):
        click.echo(f"fraction with width < {width:>4}: {frac:.3f}")


@cli.group("tasks")
def cmd_tasks():
    """Annotation task management."""


@cmd_tasks.command("create")
@click.option("--corpus", "corpus_path", required=True)
@click.option("--store", "store_path", required=True)
@click.option("--k", default=annotation.DEFAULT_K, show_default=True)
@click.option("--census-only", is_flag=True)
def cmd_tasks_create(corpus_path, store_path, k, census_only):
    """Create one task per paragraph (K annotations each)."""
    docs = ingest.load_corpus(_resolve(corpus_path))
    refs = [
        (doc.id, p.index)
        for doc in docs
        for p in doc.paragraphs
        if not census_only or p.census_related
    ]
    service = AnnotationService(FileStore(_resolve(store_path)), {d.id: d for d in docs})
    tasks = service.create_tasks(refs, k=k)
    click.echo(f"created {len(tasks)} tasks (K={k})")


@cli.command("export-amt")
@click.option("--corpus", "corpus_path", required=True)
@click.option("--paragraph-id", required=True, help="doc_id#paragraph_index")
@click.option("--out", "out_path", required=True)
def cmd_export_amt(corpus_path, paragraph_id, out_path):
    """Compile one paragraph into a self-contained crowdsourcing task page."""
    doc_id, _, index = paragraph_id.partition("#")
    docs = {d.id: d for d in ingest.load_corpus(_resolve(corpus_path))}
    service = AnnotationService(annotation.InMemoryStore(), docs)
    text = service.paragraph_text(doc_id, int(index or 0))
    html = annotation.compile_static_task_page(text, UiConfig(), task_id=paragraph_id)
    with open(_resolve(out_path), "w", encoding="utf-8") as f:
        f.write(html)
    click.echo(f"wrote {out_path}")


@cli.command("serve")
@click.option("--corpus", "corpus_path", required=True)
@click.option("--index", "index_path", required=True)
@click.option("--tagged", "tagged_path", required=True)
@click.option("--store", "store_path", required=True)
@click.option("--listen", default="127.0.0.1:8000", show_default=True)
@click.option("--static-dir", default=None, help="UI bundle served at /app")
def cmd_serve(corpus_path, index_path, tagged_path, store_path, listen, static_dir):
    """Run the HTTP API."""
    import uvicorn

    from .api import create_app

    docs = {d.id: d for d in ingest.load_corpus(_resolve(corpus_path))}
    index = search.load_index(_resolve(index_path))
    tagged = analytics.load_tagged(_resolve(tagged_path))
    service = AnnotationService(FileStore(_resolve(store_path)), docs)
    app = create_app(index, tagged, service, static_dir=static_dir)
    host, _, port = listen.partition(":")
    uvicorn.run(app, host=host, port=int(port or 8000), log_level="warning")


DATA_ERRORS = (
    ingest.IngestError,
    search.SearchError,
    crf.CrfError,
    annotation.AnnotationError,
    analytics.AnalyticsError,
    CorpusError,
    FileNotFoundError,
)


def main(argv=None):
    try:
        cli.main(args=argv, standalone_mode=False)
    except click.UsageError as e:
        e.show(file=sys.stderr)
        sys.exit(1)
    except click.Abort:
        sys.exit(1)
    except DATA_ERRORS as e:
        click.echo(f"error: {e}", err=True)
        sys.exit(2)
    sys.exit(0)


if __name__ == "__main__":
    main()
