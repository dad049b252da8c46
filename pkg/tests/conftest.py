"""Shared fixtures: small trees, scripted mocks, a tiny corpus and one synthetic build"""

from dataclasses import dataclass
from datetime import date
from typing import List

import pytest

from config import PipelineConfig, RunConfig
from corpus import TranscriptDocument, make_doc_id, segment_paragraphs
from embeddings import HashedBagEncoder
from main_pipeline import Enrichment, Providers, RunReport, build_ontology
from ontology import Ontology, seed
from providers import ChatProvider, ChatResponse, mock_configure
from synthetic import SyntheticCorpus, generate

# The worked example tree of the insertion prompt
EXAMPLE_SEED = [
    {"name": "Technology and Innovation", "children": ["5G", "Automation", "Batteries"]},
    {"name": "Environmental Issues", "children": ["Air Quality", "Biodiversity", "Carbon Neutral"]},
    {"name": "Financial Technology", "children": ["Digital Payments", "Digital Wallet", "Fintech"]},
]


def make_document(ticker: str, quarter: str, call_date: date, paragraphs: List[str], sector: str = "Tech") -> TranscriptDocument:
    doc_id = make_doc_id(ticker, quarter)
    return TranscriptDocument(
        doc_id=doc_id,
        ticker=ticker,
        sector=sector,
        call_date=call_date,
        fiscal_quarter=quarter,
        paragraphs=tuple(segment_paragraphs("\n\n".join(paragraphs), doc_id=doc_id)),
    )


class ReplayProvider(ChatProvider):
    """Returns canned replies in order; fails the test if asked for more"""

    def __init__(self, replies=()):
        self.replies = list(replies)
        self.calls = 0

    @property
    def name(self):
        return "replay"

    def chat(self, request):
        self.calls += 1
        assert self.replies, f"unexpected provider call: {request.user_message[:60]!r}"
        return ChatResponse(self.replies.pop(0))


@pytest.fixture
def three_node_tree() -> Ontology:
    tree = Ontology()
    root = tree.insert_node("Technology")
    tree.insert_node("Cloud", root.topic_id)
    tree.insert_node("Semiconductors", root.topic_id)
    return tree


@pytest.fixture
def example_tree() -> Ontology:
    return seed(Ontology(max_depth=4), EXAMPLE_SEED)


@pytest.fixture
def embedder() -> HashedBagEncoder:
    return HashedBagEncoder(256)


@pytest.fixture
def default_mock():
    return mock_configure()


@pytest.fixture
def tiny_corpus() -> List[TranscriptDocument]:
    return [
        make_document("ACME", "2023Q1", date(2023, 4, 20), [
            "Good afternoon and welcome to the call.",
            "We are cutting costs across the supply chain. Guidance for the year is unchanged.",
            "Our m&a pipeline remains active.",
        ]),
        make_document("BOLT", "2023Q1", date(2023, 4, 18), [
            "Thanks everyone for joining.",
            "Data center demand was strong and pricing held up.",
        ]),
    ]


@dataclass(frozen=True)
class SyntheticBuild:
    corpus: SyntheticCorpus
    tree: Ontology
    enrichments: List[Enrichment]
    report: RunReport


def build_synthetic(corpus: SyntheticCorpus) -> SyntheticBuild:
    run_config = RunConfig(pipeline=PipelineConfig(candidate_k=100))
    providers = Providers(mock_configure(corpus.mock_script), HashedBagEncoder(run_config.provider.embedding_dimension))
    tree, enrichments, report = build_ontology(corpus.documents, run_config, providers)
    return SyntheticBuild(corpus, tree, enrichments, report)


@pytest.fixture(scope="session")
def synthetic_build() -> SyntheticBuild:
    return build_synthetic(generate())
