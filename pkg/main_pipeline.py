"""
Main enrichment pipeline for calltopics
Orchestrates the flow from corpus paragraphs to an ontology plus enrichments
"""

import json
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from datetime import date
from pathlib import Path
from typing import Any, Dict, List, Mapping, Optional, Sequence, Tuple, Union
from uuid import UUID

from loguru import logger

from config import PipelineConfig, ProviderConfig, RunConfig
from corpus import Paragraph, TranscriptDocument, sort_for_pipeline
from embeddings import EmbeddingEncoder, HashedBagEncoder, HttpEmbeddingEncoder
from errors import CallTopicsError, IngestError
from logger import log_skipped_paragraph
from ontologist import Ontologist
from ontology import Ontology, as_utc
from providers import ChatProvider, HttpChatProvider, MockScript, MockProvider, load_mock_script, make_http_client
from retriever import RetrievalResult, retrieve_topics
from schemas import EnrichmentRecord, RunReport as RunReportRecord, emit
from seed_topics import seed_default_ontology


@dataclass(frozen=True)
class Enrichment:
    para_id: str
    topic_id: UUID
    excerpt: str
    doc_id: str
    call_date: date

    def __post_init__(self):
        if not self.excerpt.strip():
            raise ValueError(f"Enrichment for {self.para_id} has an empty excerpt")

    def to_record(self) -> Dict[str, Any]:
        return {
            "para_id": self.para_id,
            "doc_id": self.doc_id,
            "call_date": self.call_date.isoformat(),
            "topic_id": str(self.topic_id),
            "excerpt": self.excerpt,
        }

    @classmethod
    def from_record(cls, record: Mapping[str, Any]) -> "Enrichment":
        parsed = EnrichmentRecord.model_validate(record)
        return cls(parsed.para_id, parsed.topic_id, parsed.excerpt, parsed.doc_id, parsed.call_date)


@dataclass
class RunReport:
    paragraphs_processed: int = 0
    paragraphs_enriched: int = 0
    paragraphs_empty: int = 0
    paragraphs_skipped: int = 0
    topics_created: int = 0
    aliases_added: int = 0
    exact_hits: int = 0
    enrichments: int = 0
    drafts_skipped: int = 0
    skipped: List[Tuple[str, str]] = field(default_factory=list)
    skipped_drafts: List[Tuple[str, str, str]] = field(default_factory=list)

    def record_skip(self, para_id: str, reason: str) -> None:
        self.paragraphs_skipped += 1
        self.skipped.append((para_id, reason))
        log_skipped_paragraph(para_id, reason)

    def record_draft_skip(self, para_id: str, topic: str, reason: str) -> None:
        self.drafts_skipped += 1
        self.skipped_drafts.append((para_id, topic, reason))
        log_skipped_paragraph(para_id, f"topic {topic!r}: {reason}")

    def to_dict(self) -> Dict[str, Any]:
        data = dict(self.__dict__)
        data["skipped"] = [{"para_id": p, "reason": r} for p, r in self.skipped]
        data["skipped_drafts"] = [{"para_id": p, "topic": t, "reason": r} for p, t, r in self.skipped_drafts]
        return data


@dataclass(frozen=True)
class Providers:
    chat: ChatProvider
    embedder: EmbeddingEncoder


def build_providers(provider_config: ProviderConfig) -> Providers:
    """Chat + embedding backends for the configured provider kind"""
    if provider_config.kind == "mock":
        script = load_mock_script(provider_config.mock_script) if provider_config.mock_script else MockScript.default()
        return Providers(MockProvider(script), HashedBagEncoder(provider_config.embedding_dimension))

    client = make_http_client(provider_config)
    return Providers(HttpChatProvider(provider_config, client), HttpEmbeddingEncoder(provider_config, client))


class TopicPipeline:
    """
    Paragraph -> retriever -> ontologist -> enrichments

    Retrieval runs concurrently (bounded by max_in_flight); every ontology
    decision and mutation happens on the calling thread in corpus order.
    """

    def __init__(
        self,
        tree: Ontology,
        providers: Providers,
        config: Optional[PipelineConfig] = None,
        provider_config: Optional[ProviderConfig] = None,
    ):
        self.tree = tree
        self.providers = providers
        self.config = config or PipelineConfig()
        self.provider_config = provider_config or ProviderConfig()
        self.ontologist = Ontologist(tree, providers.chat, providers.embedder, self.config, self.provider_config)
        logger.info(f"Topic pipeline initialized ({providers.chat.name}, max_in_flight={self.config.max_in_flight})")

    def _retrieve(self, paragraph: Paragraph) -> RetrievalResult:
        try:
            return retrieve_topics(paragraph, self.providers.chat, self.provider_config, self.config.retry_malformed_json)
        except CallTopicsError as e:
            if not self.config.skip_failed_paragraphs:
                raise
            return RetrievalResult(paragraph.para_id, (), skipped_reason=f"{type(e).__name__}: {e}")

    def enrich_corpus(self, corpus: Sequence[TranscriptDocument]) -> Tuple[List[Enrichment], RunReport]:
        """
        Run the agents over every paragraph

        A topic that fails to integrate is skipped on its own; the other
        topics of its paragraph keep their enrichments. A paragraph is
        skipped only when retrieval fails or every topic in it fails.

        Args:
            corpus: Transcripts; processed by call_date then ticker

        Returns:
            (enrichments in corpus order, run report)
        """
        documents = sort_for_pipeline(corpus)
        work = [(doc, paragraph) for doc in documents for paragraph in doc.paragraphs]
        report = RunReport()
        enrichments: List[Enrichment] = []
        logger.info(f"=== Enriching {len(work)} paragraphs from {len(documents)} transcripts ===")

        with ThreadPoolExecutor(max_workers=self.config.max_in_flight) as pool:
            results = pool.map(self._retrieve, [paragraph for _, paragraph in work])
            for (doc, paragraph), result in zip(work, results):
                report.paragraphs_processed += 1
                if result.skipped:
                    report.record_skip(paragraph.para_id, result.skipped_reason)
                    continue

                now = as_utc(doc.call_date)
                found: List[Enrichment] = []
                failures: List[str] = []
                for draft in result.drafts:
                    try:
                        integration = self.ontologist.integrate_topic(draft.topic_name, now)
                    except CallTopicsError as e:
                        if not self.config.skip_failed_paragraphs:
                            raise
                        reason = f"{type(e).__name__}: {e}"
                        report.record_draft_skip(paragraph.para_id, draft.topic_name, reason)
                        failures.append(reason)
                        continue
                    if integration.outcome == "inserted":
                        report.topics_created += 1
                    elif integration.outcome == "alias":
                        report.aliases_added += 1
                    else:
                        report.exact_hits += 1
                    found.extend(
                        Enrichment(paragraph.para_id, integration.topic_id, excerpt, doc.doc_id, doc.call_date)
                        for excerpt in draft.excerpts
                    )

                if found:
                    report.paragraphs_enriched += 1
                    enrichments.extend(found)
                elif failures:
                    report.record_skip(paragraph.para_id, failures[0])
                else:
                    report.paragraphs_empty += 1

                if report.paragraphs_processed % 100 == 0:
                    logger.info(f"Processed {report.paragraphs_processed}/{len(work)} paragraphs, {len(self.tree)} topics")

        report.enrichments = len(enrichments)
        logger.info(
            f"Enrichment complete: {report.enrichments} enrichments, {report.topics_created} new topics, "
            f"{report.aliases_added} aliases, {report.paragraphs_skipped} paragraphs and {report.drafts_skipped} topics skipped"
        )
        return enrichments, report


def build_ontology(
    corpus: Sequence[TranscriptDocument],
    run_config: RunConfig,
    providers: Optional[Providers] = None,
) -> Tuple[Ontology, List[Enrichment], RunReport]:
    """Seed a fresh tree and enrich the corpus into it"""
    tree = seed_default_ontology(run_config.pipeline.max_depth, run_config.io.seed_spec)
    providers = providers or build_providers(run_config.provider)
    pipeline = TopicPipeline(tree, providers, run_config.pipeline, run_config.provider)
    enrichments, report = pipeline.enrich_corpus(corpus)
    return tree, enrichments, report


def write_enrichments(enrichments: Sequence[Enrichment], path: Union[str, Path]) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", encoding="utf-8") as handle:
        for enrichment in enrichments:
            handle.write(emit(EnrichmentRecord, enrichment.to_record(), indent=None) + "\n")
    return path


def load_enrichments(path: Union[str, Path]) -> List[Enrichment]:
    path = Path(path)
    try:
        lines = path.read_text(encoding="utf-8").splitlines()
    except OSError as e:
        raise IngestError(f"Cannot read enrichments {path}: {e}") from e
    try:
        return [Enrichment.from_record(json.loads(line)) for line in lines if line.strip()]
    except ValueError as e:
        raise IngestError(f"Invalid enrichment record in {path}: {e}") from e


def write_run_report(report: RunReport, path: Union[str, Path]) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(emit(RunReportRecord, report.to_dict()) + "\n", encoding="utf-8")
    return path
