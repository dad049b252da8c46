"""
Pydantic models for calltopics
LLM reply payloads (validated on parse) and every JSON record the tools emit
"""

from datetime import date, datetime
from typing import Any, Dict, List, Literal, Optional, Type
from uuid import UUID

from pydantic import BaseModel, ConfigDict, Field


# ---- LLM payloads ---------------------------------------------------------

class RetrieverItem(BaseModel):
    model_config = ConfigDict(extra="ignore", strict=True)

    topic_name: str
    excerpts: List[str]


class MatchItem(BaseModel):
    model_config = ConfigDict(extra="ignore")

    topic: str
    similarity: float


class MatchedTopicDetail(BaseModel):
    model_config = ConfigDict(extra="ignore")

    topic: str = ""
    similarity: Optional[float] = None
    reasoning: str = ""
    parent_subset_check: str = ""


class DetailedAnalysis(BaseModel):
    model_config = ConfigDict(extra="ignore")

    matched_topics: List[MatchedTopicDetail] = Field(default_factory=list)


class MatchPayload(BaseModel):
    model_config = ConfigDict(extra="ignore")

    query_topic: str = ""
    matches: List[MatchItem] = Field(default_factory=list)
    detailed_analysis: Optional[DetailedAnalysis] = None


class ParentPayload(BaseModel):
    model_config = ConfigDict(extra="ignore")

    reasoning: str = ""
    parent: Optional[str] = None


# ---- Files ----------------------------------------------------------------

class TopicNodeRecord(BaseModel):
    topic_id: UUID
    name: str
    aliases: List[str]
    created_on: datetime
    updated_on: datetime
    parent_id: Optional[UUID] = None
    child_ids: List[UUID]


class OntologyFile(BaseModel):
    max_depth: int = Field(ge=1)
    seed_timestamp: Optional[datetime] = None
    roots: List[UUID]
    nodes: List[TopicNodeRecord]


class SeedTopic(BaseModel):
    model_config = ConfigDict(extra="forbid")

    name: str = Field(min_length=1)
    children: List[str] = Field(default_factory=list)


class ParagraphRecord(BaseModel):
    para_id: str
    doc_index: int = Field(ge=0)
    text: str


class CorpusRecord(BaseModel):
    doc_id: str
    ticker: str
    sector: str
    call_date: date
    fiscal_quarter: str = Field(pattern=r"^\d{4}Q[1-4]$")
    paragraphs: List[ParagraphRecord] = Field(min_length=1)


class EnrichmentRecord(BaseModel):
    para_id: str
    doc_id: str
    call_date: date
    topic_id: UUID
    excerpt: str = Field(min_length=1)


class SkippedParagraph(BaseModel):
    para_id: str
    reason: str


class SkippedDraft(BaseModel):
    para_id: str
    topic: str
    reason: str


class RunReport(BaseModel):
    paragraphs_processed: int = Field(ge=0)
    paragraphs_enriched: int = Field(ge=0)
    paragraphs_empty: int = Field(ge=0)
    paragraphs_skipped: int = Field(ge=0)
    topics_created: int = Field(ge=0)
    aliases_added: int = Field(ge=0)
    exact_hits: int = Field(ge=0)
    enrichments: int = Field(ge=0)
    drafts_skipped: int = Field(ge=0)
    skipped: List[SkippedParagraph]
    skipped_drafts: List[SkippedDraft]


# ---- Reports --------------------------------------------------------------

class CorpusStatsReport(BaseModel):
    total_transcripts: int = Field(ge=0)
    total_paragraphs: int = Field(ge=0)
    total_quarters: int = Field(ge=0)
    vocabulary_size: int = Field(ge=0)
    avg_paragraph_len_words: float = Field(ge=0)
    std_paragraph_len_words: float = Field(ge=0)
    avg_document_len_words: float = Field(ge=0)
    avg_document_len_paragraphs: float = Field(ge=0)
    avg_sentence_len_words: float = Field(ge=0)
    paragraph_length_histogram: Optional[List[List[int]]] = None


class OntologyStatsReport(BaseModel):
    total_nodes: int = Field(ge=0)
    num_levels: int = Field(ge=0)
    num_leaf_nodes: int = Field(ge=0)
    avg_children_per_node: float = Field(ge=0)
    std_children_per_node: float = Field(ge=0)
    avg_aliases_per_node: float = Field(ge=0)
    std_aliases_per_node: float = Field(ge=0)
    nodes_per_level: List[int]


class StatsReport(BaseModel):
    corpus: Optional[CorpusStatsReport] = None
    ontology: Optional[OntologyStatsReport] = None


class TrendRow(BaseModel):
    topic_id: UUID
    topic: str
    company: str
    tau: float = Field(ge=-1, le=1)
    p_value: float = Field(ge=0, le=1)
    direction: Literal["up", "down", "none"]


class TrendReport(BaseModel):
    company: str
    alpha: float
    trending_up: List[TrendRow]
    trending_down: List[TrendRow]
    skipped: List[Dict[str, str]]


class JaccardMatrixReport(BaseModel):
    companies: List[str]
    values: List[List[float]]


class CommonTopicsRow(BaseModel):
    competitor: str
    common_topics: List[str]
    count: int = Field(ge=0)


class CompareReport(BaseModel):
    top_n: int = Field(ge=1)
    matrices: Dict[str, JaccardMatrixReport]
    common: Optional[Dict[str, Any]] = None
    unique: Optional[Dict[str, List[str]]] = None


class EmergingRow(BaseModel):
    topic_id: UUID
    topic: str
    early_count: int = Field(ge=0, le=0)
    late_count: int = Field(ge=0)


class EmergingReport(BaseModel):
    split: date
    min_late_mentions: int = Field(ge=1)
    topics: List[EmergingRow]


class TimelinePoint(BaseModel):
    day: date
    new_topics: int = Field(ge=0)
    smoothed: Optional[float] = None


class TimelineReport(BaseModel):
    points: List[TimelinePoint]


class CoherenceRow(BaseModel):
    parent_name: str
    sampled_children: List[str] = Field(min_length=2, max_length=5)
    avg_cos_true: float = Field(ge=-1, le=1)
    random_parent_name: str
    avg_cos_random: float = Field(ge=-1, le=1)


class CoherenceReport(BaseModel):
    rows: List[CoherenceRow]
    overall_true_avg: float
    overall_random_avg: float


class SynthManifest(BaseModel):
    seed: int
    corpus: str
    mock_script: str
    product_list: str
    run_config: str
    documents: int = Field(ge=0)
    paragraphs: int = Field(ge=0)


class ErrorReport(BaseModel):
    error: str
    message: str


OUTPUT_SCHEMAS: Dict[str, Type[BaseModel]] = {
    "ontology": OntologyFile,
    "corpus_record": CorpusRecord,
    "enrichment": EnrichmentRecord,
    "run_report": RunReport,
    "stats": StatsReport,
    "trends": TrendReport,
    "compare": CompareReport,
    "emerging": EmergingReport,
    "timeline": TimelineReport,
    "coherence": CoherenceReport,
    "synth": SynthManifest,
    "error": ErrorReport,
}


def emit(model: Type[BaseModel], data: Any, indent: Optional[int] = 2) -> str:
    """Validate data against a record model and serialize it"""
    return model.model_validate(data).model_dump_json(indent=indent)


def json_schemas() -> Dict[str, Dict[str, Any]]:
    return {name: model.model_json_schema() for name, model in OUTPUT_SCHEMAS.items()}
