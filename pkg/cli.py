"""
calltopics command line
Wires ingestion, the enrichment pipeline and the analytics to config files
"""

import argparse
import json
import sys
from dataclasses import replace
from pathlib import Path
from typing import Any, Callable, Dict, FrozenSet, List, Optional, Sequence, Tuple
from uuid import UUID

import pandas as pd
from dateutil import parser as date_parser
from loguru import logger

from analytics import (
    MentionData,
    classify_product_topics,
    coherence_eval,
    common_topics_report,
    detect_trends,
    discovery_timeline,
    emerging_topics,
    jaccard_matrix,
    load_product_list,
    sector_jaccard_matrices,
    trend_series_export,
    unique_topics,
    write_table,
)
from config import LOGS_DIR, RunConfig, load_run_config, validate_config
from corpus import (
    corpus_stats,
    ingest,
    ingest_directory,
    load_corpus_jsonl,
    paragraph_length_histogram,
    save_corpus_jsonl,
)
from errors import CallTopicsError, ConfigError, NotFoundError
from logger import add_file_sinks, set_console_level
from main_pipeline import build_ontology, build_providers, load_enrichments, write_enrichments, write_run_report
from ontology import Ontology, load, ontology_stats, save
from schemas import (
    CoherenceReport,
    CompareReport,
    EmergingReport,
    ErrorReport,
    RunReport,
    StatsReport,
    SynthManifest,
    TimelineReport,
    TrendReport,
    emit,
    json_schemas,
)
from synthetic import SyntheticCorpusSpec, generate, write_synthetic

DEFAULT_SEED = 7

EXIT_OK = 0
EXIT_RUNTIME = 1
EXIT_USAGE = 2


class CliParser(argparse.ArgumentParser):
    """Usage errors become ConfigError so main() reports them as JSON"""

    def error(self, message):
        raise ConfigError(f"{self.prog}: {message}")


# ---- shared helpers -----------------------------------------------------

def _run_config(args: argparse.Namespace) -> RunConfig:
    run_config = load_run_config(args.config)
    if args.provider:
        run_config = replace(run_config, provider=replace(run_config.provider, kind=args.provider))
    return run_config


def _out_dir(args: argparse.Namespace, run_config: RunConfig) -> Path:
    out_dir = Path(args.out_dir or run_config.io.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    return out_dir


def _corpus_path(args, run_config: RunConfig, out_dir: Path) -> Path:
    return Path(getattr(args, "corpus", None) or run_config.io.corpus or out_dir / "corpus.jsonl")


def _ontology_path(args, run_config: RunConfig, out_dir: Path) -> Path:
    return Path(getattr(args, "ontology", None) or run_config.io.ontology or out_dir / "ontology.json")


def _enrichments_path(args, run_config: RunConfig, out_dir: Path) -> Path:
    return Path(getattr(args, "enrichments", None) or run_config.io.enrichments or out_dir / "enrichments.jsonl")


def _load_mentions(args, run_config: RunConfig, out_dir: Path) -> Tuple[Ontology, MentionData]:
    tree = load(_ontology_path(args, run_config, out_dir))
    corpus = load_corpus_jsonl(_corpus_path(args, run_config, out_dir))
    enrichments = load_enrichments(_enrichments_path(args, run_config, out_dir))
    return tree, MentionData.from_enrichments(enrichments, corpus)


def _product_filter(run_config: RunConfig, tree: Ontology) -> FrozenSet[UUID]:
    analytics = run_config.analytics
    names = load_product_list(analytics.product_list) if analytics.product_list else []
    chat = None
    if analytics.classify_products:
        validate_config(run_config)
        chat = build_providers(run_config.provider).chat
    return classify_product_topics(tree, names, chat, run_config.provider)


def _publish(args, out_dir: Path, name: str, model, data: Any, rows: Optional[Any] = None) -> None:
    """Validate, write <name>.json (and <name>.csv for --format csv), echo JSON to stdout"""
    text = emit(model, data)
    (out_dir / f"{name}.json").write_text(text + "\n", encoding="utf-8")
    if args.format == "csv" and rows is not None:
        path = write_table(rows, out_dir / f"{name}.csv")
        logger.info(f"Wrote {path}")
    sys.stdout.write(text + "\n")


def _split_list(value: Optional[str]) -> List[str]:
    return [item.strip() for item in value.split(",") if item.strip()] if value else []


def _parse_date(value: str):
    try:
        return date_parser.isoparse(value).date()
    except ValueError as e:
        raise argparse.ArgumentTypeError(f"not an ISO date: {value!r}") from e


# ---- commands -------------------------------------------------------------

def cmd_ingest(args: argparse.Namespace) -> int:
    run_config = _run_config(args)
    out_dir = _out_dir(args, run_config)
    source = Path(args.source)

    if source.is_dir():
        corpus = ingest_directory(source, args.sidecar, max_workers=run_config.pipeline.max_in_flight)
    elif source.suffix.lower() == ".jsonl":
        corpus = load_corpus_jsonl(source)
    else:
        metadata = None
        if args.sidecar:
            sidecar = json.loads(Path(args.sidecar).read_text(encoding="utf-8"))
            metadata = sidecar.get(source.name)
        corpus = [ingest(source, metadata)]

    path = save_corpus_jsonl(corpus, Path(args.output) if args.output else out_dir / "corpus.jsonl")
    logger.info(f"Corpus written to {path}")
    stats = corpus_stats(corpus).to_dict()
    _publish(args, out_dir, "corpus_stats", StatsReport, {"corpus": stats}, [stats])
    return EXIT_OK


def cmd_build(args: argparse.Namespace) -> int:
    run_config = _run_config(args)
    validate_config(run_config)
    out_dir = _out_dir(args, run_config)
    corpus = load_corpus_jsonl(_corpus_path(args, run_config, out_dir))

    tree, enrichments, report = build_ontology(corpus, run_config)

    save(tree, _ontology_path(args, run_config, out_dir))
    write_enrichments(enrichments, _enrichments_path(args, run_config, out_dir))
    write_run_report(report, out_dir / "run_report.json")
    sys.stdout.write(emit(RunReport, report.to_dict()) + "\n")
    return EXIT_OK


def cmd_stats(args: argparse.Namespace) -> int:
    if not args.corpus and not args.ontology:
        raise ConfigError("stats needs --corpus and/or --ontology")
    run_config = _run_config(args)
    out_dir = _out_dir(args, run_config)

    report: Dict[str, Any] = {}
    rows = []
    if args.corpus:
        corpus = load_corpus_jsonl(args.corpus)
        report["corpus"] = corpus_stats(corpus).to_dict()
        if args.histogram_bin:
            report["corpus"]["paragraph_length_histogram"] = [
                list(pair) for pair in paragraph_length_histogram(corpus, args.histogram_bin)
            ]
        rows.append({"source": "corpus", **{k: v for k, v in report["corpus"].items() if k != "paragraph_length_histogram"}})
    if args.ontology:
        report["ontology"] = ontology_stats(load(args.ontology)).to_dict()
        rows.append({"source": "ontology", **report["ontology"]})

    _publish(args, out_dir, "stats", StatsReport, report, rows)
    return EXIT_OK


def cmd_trends(args: argparse.Namespace) -> int:
    run_config = _run_config(args)
    out_dir = _out_dir(args, run_config)
    tree, data = _load_mentions(args, run_config, out_dir)
    analytics = run_config.analytics
    if args.company not in data.coverage:
        raise NotFoundError(f"No calls for company {args.company}")

    report = detect_trends(
        data,
        args.company,
        tree=tree,
        alpha=args.alpha if args.alpha is not None else analytics.alpha,
        product_filter=_product_filter(run_config, tree),
        min_quarters=args.min_quarters or analytics.min_quarters,
        rollup=args.rollup or analytics.rollup,
        count_mode=args.count_mode or analytics.count_mode,
    )
    rows = [r.to_dict() for r in report.trending_up + report.trending_down]
    _publish(args, out_dir, "trends", TrendReport, report.to_dict(), rows)

    if args.series:
        node = tree.find_by_name_or_alias(args.series)
        if node is None:
            raise NotFoundError(f"Unknown topic: {args.series}")
        frame = trend_series_export(
            data, node.topic_id, [args.company] + _split_list(args.peers), tree, analytics.span, analytics.degree,
            rollup=args.rollup or analytics.rollup, count_mode=args.count_mode or analytics.count_mode,
        )
        logger.info(f"Wrote {write_table(frame, out_dir / 'trend_series.csv')}")
    return EXIT_OK


def cmd_compare(args: argparse.Namespace) -> int:
    run_config = _run_config(args)
    out_dir = _out_dir(args, run_config)
    tree, data = _load_mentions(args, run_config, out_dir)
    products = _product_filter(run_config, tree)
    top_n = args.top_n or run_config.analytics.top_n

    if args.sector:
        matrices = sector_jaccard_matrices(data, top_n, tree, products)
    else:
        companies = _split_list(args.companies) or data.companies()
        matrices = {"all": jaccard_matrix(data, companies, top_n, tree, products)}

    report: Dict[str, Any] = {"top_n": top_n, "matrices": {k: m.to_dict() for k, m in matrices.items()}}
    if args.anchor:
        competitors = [c for c in (_split_list(args.companies) or data.companies()) if c != args.anchor]
        report["common"] = {"anchor": args.anchor, "rows": common_topics_report(data, tree, args.anchor, competitors, top_n, products)}
        report["unique"] = {args.anchor: unique_topics(data, args.anchor, competitors, tree, top_n, product_filter=products)}

    rows = [
        {"group": group, "company_a": a, "company_b": b, "jaccard": float(matrix.values[i, j])}
        for group, matrix in matrices.items()
        for i, a in enumerate(matrix.companies)
        for j, b in enumerate(matrix.companies)
    ]
    _publish(args, out_dir, "compare", CompareReport, report, rows)
    return EXIT_OK


def cmd_emerging(args: argparse.Namespace) -> int:
    run_config = _run_config(args)
    out_dir = _out_dir(args, run_config)
    tree, data = _load_mentions(args, run_config, out_dir)
    threshold = args.min_late_mentions or run_config.analytics.min_late_mentions

    found = emerging_topics(data, args.split, threshold, tree, _product_filter(run_config, tree), end=args.end)
    rows = [e.to_dict() for e in found]
    report = {"split": args.split, "min_late_mentions": threshold, "topics": rows}
    _publish(args, out_dir, "emerging", EmergingReport, report, rows)
    return EXIT_OK


def cmd_coherence(args: argparse.Namespace) -> int:
    run_config = _run_config(args)
    validate_config(run_config)
    out_dir = _out_dir(args, run_config)
    tree = load(_ontology_path(args, run_config, out_dir))
    embedder = build_providers(run_config.provider).embedder
    seed = args.seed if args.seed is not None else DEFAULT_SEED

    report = coherence_eval(tree, embedder, args.num_parents or run_config.analytics.coherence_parents, seed)
    data = report.to_dict()
    rows = [{**row, "sampled_children": "; ".join(row["sampled_children"])} for row in data["rows"]]
    _publish(args, out_dir, "coherence", CoherenceReport, data, rows)
    return EXIT_OK


def cmd_timeline(args: argparse.Namespace) -> int:
    run_config = _run_config(args)
    out_dir = _out_dir(args, run_config)
    tree = load(_ontology_path(args, run_config, out_dir))
    analytics = run_config.analytics

    points = discovery_timeline(tree, None if args.no_smooth else (analytics.span, analytics.degree))
    _publish(args, out_dir, "timeline", TimelineReport, {"points": points}, pd.DataFrame(points, columns=["day", "new_topics", "smoothed"]))
    return EXIT_OK


def cmd_synth(args: argparse.Namespace) -> int:
    run_config = _run_config(args)
    out_dir = _out_dir(args, run_config)
    seed = args.seed if args.seed is not None else DEFAULT_SEED

    corpus = generate(SyntheticCorpusSpec(seed=seed))
    paths = write_synthetic(corpus, out_dir, candidate_k=args.candidate_k)
    manifest = {
        "seed": seed,
        **paths,
        "documents": len(corpus.documents),
        "paragraphs": sum(len(d.paragraphs) for d in corpus.documents),
    }
    sys.stdout.write(emit(SynthManifest, manifest) + "\n")
    return EXIT_OK


def cmd_schema(args: argparse.Namespace) -> int:
    schemas = json_schemas()
    if args.name:
        if args.name not in schemas:
            raise ConfigError(f"Unknown schema {args.name!r}; choose from {sorted(schemas)}")
        schemas = schemas[args.name]
    sys.stdout.write(json.dumps(schemas, indent=2, sort_keys=True) + "\n")
    return EXIT_OK


# ---- parser -----------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    """Build the calltopics argument parser"""
    parser = CliParser(
        prog="calltopics",
        description="Agentic topic ontology and insight analytics for earnings-call transcripts",
    )
    parser.add_argument("--config", help="Run config (JSON or TOML)")
    parser.add_argument("--provider", choices=["mock", "http"], help="Override provider.kind")
    parser.add_argument("--seed", type=int, help=f"Random seed for synth/coherence (default {DEFAULT_SEED})")
    parser.add_argument("--out-dir", help="Output directory (default io.out_dir)")
    parser.add_argument("--format", choices=["json", "csv"], default="json", help="Also write report tables as CSV")
    parser.add_argument("--log-level", default=None, help="Console log level (DEBUG, INFO, WARNING, ...)")
    parser.add_argument("--logs-dir", default=None, help=f"Directory for run logs (default {LOGS_DIR})")

    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("ingest", help="Ingest transcripts into a corpus JSONL")
    p.add_argument("source", help="Directory of .txt transcripts, a single transcript, or a corpus .jsonl")
    p.add_argument("--sidecar", help="Metadata JSON keyed by file name (default <dir>/metadata.json)")
    p.add_argument("--output", help="Corpus path (default <out-dir>/corpus.jsonl)")
    p.set_defaults(handler=cmd_ingest)

    p = sub.add_parser("build", help="Seed the ontology and enrich the corpus")
    p.add_argument("--corpus")
    p.add_argument("--ontology", help="Where to write the ontology")
    p.add_argument("--enrichments", help="Where to write the enrichments")
    p.set_defaults(handler=cmd_build)

    p = sub.add_parser("stats", help="Corpus and/or ontology statistics")
    p.add_argument("--corpus")
    p.add_argument("--ontology")
    p.add_argument("--histogram-bin", type=int, help="Add a paragraph-length histogram with this bin width")
    p.set_defaults(handler=cmd_stats)

    analytics_inputs = CliParser(add_help=False)
    analytics_inputs.add_argument("--corpus")
    analytics_inputs.add_argument("--ontology")
    analytics_inputs.add_argument("--enrichments")

    p = sub.add_parser("trends", parents=[analytics_inputs], help="Trending topics for a company")
    p.add_argument("--company", required=True)
    p.add_argument("--alpha", type=float)
    p.add_argument("--min-quarters", type=int)
    p.add_argument("--rollup", action="store_true", help="Count descendants with their ancestors")
    p.add_argument("--count-mode", choices=["mention", "paragraph"])
    p.add_argument("--series", help="Also export raw and smoothed series of this topic")
    p.add_argument("--peers", help="Comma-separated companies added to the --series export")
    p.set_defaults(handler=cmd_trends)

    p = sub.add_parser("compare", parents=[analytics_inputs], help="Competitor topic similarity")
    p.add_argument("--companies", help="Comma-separated tickers (default all)")
    p.add_argument("--sector", action="store_true", help="One matrix per sector")
    p.add_argument("--anchor", help="Company for the common/unique topic lists")
    p.add_argument("--top-n", type=int)
    p.set_defaults(handler=cmd_compare)

    p = sub.add_parser("emerging", parents=[analytics_inputs], help="Topics that appear after a split date")
    p.add_argument("--split", required=True, type=_parse_date)
    p.add_argument("--end", type=_parse_date)
    p.add_argument("--min-late-mentions", type=int)
    p.set_defaults(handler=cmd_emerging)

    p = sub.add_parser("coherence", help="Parent-child embedding coherence")
    p.add_argument("--ontology")
    p.add_argument("--num-parents", type=int)
    p.set_defaults(handler=cmd_coherence)

    p = sub.add_parser("timeline", help="New topics per call date")
    p.add_argument("--ontology")
    p.add_argument("--no-smooth", action="store_true")
    p.set_defaults(handler=cmd_timeline)

    p = sub.add_parser("synth", help="Write the synthetic corpus, mock script and run config")
    p.add_argument("--candidate-k", type=int, default=100)
    p.set_defaults(handler=cmd_synth)

    p = sub.add_parser("schema", help="Print the JSON schemas of every output")
    p.add_argument("--name")
    p.set_defaults(handler=cmd_schema)

    return parser


def _report_error(error: BaseException) -> None:
    sys.stderr.write(emit(ErrorReport, {"error": type(error).__name__, "message": str(error)}, indent=None) + "\n")


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        if args.log_level:
            set_console_level(args.log_level)
        add_file_sinks(Path(args.logs_dir) if args.logs_dir else LOGS_DIR)
        handler: Callable[[argparse.Namespace], int] = args.handler
        return handler(args)
    except ConfigError as e:
        _report_error(e)
        return EXIT_USAGE
    except CallTopicsError as e:
        logger.error(f"{type(e).__name__}: {e}")
        _report_error(e)
        return EXIT_RUNTIME
    except Exception as e:
        logger.exception("Unexpected failure")
        _report_error(e)
        return EXIT_RUNTIME


if __name__ == "__main__":
    raise SystemExit(main())
