"""
Synthetic earnings-call corpus for calltopics
Generates transcripts with planted mention schedules plus the mock-provider
script that reproduces them, so the whole pipeline runs offline
"""

import json
from dataclasses import dataclass, field
from datetime import date, timedelta
from pathlib import Path
from typing import Any, Dict, List, Mapping, Optional, Tuple, Union

import numpy as np
from loguru import logger

from corpus import TranscriptDocument, make_doc_id, parse_fiscal_quarter, quarter_from_ordinal, quarter_ordinal, save_corpus_jsonl, segment_paragraphs
from ontology import Ontology, seed

SYNONYM_SIMILARITY = 95

MENTION_TEMPLATES = (
    "Management commented on {kw} again this quarter.",
    "We saw continued momentum in {kw} across the business.",
    "Analysts asked about {kw} and we gave more color on the outlook.",
    "Our teams made steady progress on {kw} during the period.",
)

FILLER_PARAGRAPHS = (
    "Operator: please hold for the next question.",
    "Thank you, and good afternoon everyone.",
    "Let me turn the call over to our chief financial officer.",
    "We appreciate everyone joining us today.",
    "Next question, please.",
    "That concludes our prepared remarks.",
)


@dataclass(frozen=True)
class PlantedTopic:
    """
    A topic the generator writes into the corpus

    schedule: mentions per quarter (one paragraph each) for every listed company
    parent_path: labels from a root down to the intended parent
    synonym_of: existing label the matcher should equate this topic with
    """

    name: str
    keyword: str
    schedule: Tuple[int, ...]
    companies: Tuple[str, ...]
    parent_path: Tuple[str, ...] = ()
    synonym_of: Optional[str] = None
    product: bool = False

    def __post_init__(self):
        if any(c < 0 for c in self.schedule):
            raise ValueError(f"Schedule for {self.name} has negative counts")


DEFAULT_PLANTED_TOPICS = (
    PlantedTopic("Supply Chain", "supply chain", tuple(range(10, 0, -1)), ("TSLA", "F", "GM")),
    PlantedTopic("Supply Chain", "supply chain", (2,) * 10, ("NVDA", "AMD", "INTC")),
    PlantedTopic("Generative AI", "generative ai", tuple(range(1, 11)), ("TSLA", "F", "GM", "NVDA", "AMD", "INTC")),
    PlantedTopic("Cybertruck", "cybertruck", tuple(range(0, 10)), ("TSLA",), ("Automotive", "Electric Vehicles"), product=True),
    PlantedTopic("M&A", "m&a", (1,) * 10, ("F", "GM"), synonym_of="Mergers & Acquisitions"),
    PlantedTopic("Share Buybacks", "share buybacks", (1,) * 10, ("AMD", "INTC"), synonym_of="Buybacks"),
    PlantedTopic("Roboadvisor", "roboadvisor", (1,) * 10, ("INTC",), ("Financial Technology", "Fintech")),
    PlantedTopic("Robotics", "robotics", (1,) * 10, ("TSLA", "NVDA"), ("Technology and Innovation",)),
    PlantedTopic(
        "High Bandwidth Memory", "high bandwidth memory", (0,) * 6 + (2, 2, 2, 1), ("NVDA",),
        ("Semiconductors", "Chip Design"),
    ),
    PlantedTopic("Battery Recycling", "battery recycling", (1,) * 10, ("F", "GM"), ("Technology and Innovation", "Batteries")),
)


@dataclass(frozen=True)
class SyntheticCorpusSpec:
    sectors: Mapping[str, Tuple[str, ...]] = field(default_factory=lambda: {
        "Electric Vehicles": ("TSLA", "F", "GM"),
        "Semiconductors": ("NVDA", "AMD", "INTC"),
    })
    first_quarter: str = "2021Q4"
    quarters: int = 10
    topics: Tuple[PlantedTopic, ...] = DEFAULT_PLANTED_TOPICS
    fillers_per_call: int = 2
    emerging_split_index: int = 6
    seed: int = 7

    def __post_init__(self):
        parse_fiscal_quarter(self.first_quarter)
        if self.quarters < 1:
            raise ValueError("quarters must be >= 1")
        for topic in self.topics:
            if len(topic.schedule) != self.quarters:
                raise ValueError(f"Schedule for {topic.name} must have {self.quarters} entries")

    @property
    def tickers(self) -> List[str]:
        return [t for members in self.sectors.values() for t in members]

    def quarter_labels(self) -> List[str]:
        start = quarter_ordinal(self.first_quarter)
        return [quarter_from_ordinal(start + i) for i in range(self.quarters)]

    def call_date(self, quarter: str, ticker: str) -> date:
        """Calls land three weeks into the month after quarter end, one day apart per company"""
        year, q = parse_fiscal_quarter(quarter)
        month_after = date(year + 1, 1, 1) if q == 4 else date(year, 3 * q + 1, 1)
        return month_after + timedelta(days=20 + self.tickers.index(ticker))

    def split_date(self) -> date:
        quarter = self.quarter_labels()[self.emerging_split_index]
        return min(self.call_date(quarter, t) for t in self.tickers)


@dataclass(frozen=True)
class SyntheticCorpus:
    documents: List[TranscriptDocument]
    mock_script: Dict[str, Any]
    product_names: List[str]
    split: date


def build_mock_script(spec: SyntheticCorpusSpec) -> Dict[str, Any]:
    """Keyword retriever rules plus canned matcher/ontologist answers for the planted topics"""
    keyword_rules: Dict[str, str] = {}
    matcher: Dict[str, List[Dict[str, Any]]] = {}
    ontologist: Dict[str, List[str]] = {}
    products: List[str] = []
    for topic in spec.topics:
        keyword_rules[topic.keyword] = topic.name
        if topic.synonym_of:
            matcher[topic.name] = [{"topic": topic.synonym_of, "similarity": SYNONYM_SIMILARITY}]
        if topic.parent_path:
            ontologist[topic.name] = list(topic.parent_path)
        if topic.product and topic.name not in products:
            products.append(topic.name)
    return {
        "keyword_rules": keyword_rules,
        "matcher": matcher,
        "matcher_default": "no_match",
        "ontologist": ontologist,
        "ontologist_default": "root",
        "product_names": products,
    }


def generate(spec: Optional[SyntheticCorpusSpec] = None) -> SyntheticCorpus:
    """
    Build the corpus, mock script and product list for a spec

    The same spec (including seed) always yields the same output.
    """
    spec = spec or SyntheticCorpusSpec()
    rng = np.random.default_rng(spec.seed)
    documents = []

    for sector, tickers in spec.sectors.items():
        for ticker in tickers:
            for index, quarter in enumerate(spec.quarter_labels()):
                blocks = []
                for topic in spec.topics:
                    if ticker not in topic.companies:
                        continue
                    for _ in range(topic.schedule[index]):
                        template = MENTION_TEMPLATES[int(rng.integers(len(MENTION_TEMPLATES)))]
                        blocks.append(template.format(kw=topic.keyword))
                fillers = rng.choice(len(FILLER_PARAGRAPHS), size=spec.fillers_per_call, replace=False)
                blocks.extend(FILLER_PARAGRAPHS[int(i)] for i in fillers)
                order = rng.permutation(len(blocks))

                doc_id = make_doc_id(ticker, quarter)
                documents.append(TranscriptDocument(
                    doc_id=doc_id,
                    ticker=ticker,
                    sector=sector,
                    call_date=spec.call_date(quarter, ticker),
                    fiscal_quarter=quarter,
                    paragraphs=tuple(segment_paragraphs("\n\n".join(blocks[int(i)] for i in order), doc_id=doc_id)),
                ))

    script = build_mock_script(spec)
    logger.info(
        f"Generated synthetic corpus: {len(documents)} calls, "
        f"{sum(len(d.paragraphs) for d in documents)} paragraphs, seed {spec.seed}"
    )
    return SyntheticCorpus(documents, script, list(script["product_names"]), spec.split_date())


def write_synthetic(corpus: SyntheticCorpus, out_dir: Union[str, Path], candidate_k: int = 100) -> Dict[str, str]:
    """
    Write corpus.jsonl, mock_script.json, products.txt and a run config
    wired to them. The run config widens the candidate shortlist because
    the hashed mock embedder cannot see that short forms like "M&A" are
    close to their long names.
    """
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    paths = {
        "corpus": out_dir / "corpus.jsonl",
        "mock_script": out_dir / "mock_script.json",
        "product_list": out_dir / "products.txt",
        "run_config": out_dir / "run_config.json",
    }
    save_corpus_jsonl(corpus.documents, paths["corpus"])
    paths["mock_script"].write_text(json.dumps(corpus.mock_script, indent=2, ensure_ascii=False) + "\n", encoding="utf-8")
    paths["product_list"].write_text("".join(f"{name}\n" for name in corpus.product_names), encoding="utf-8")

    run_config = {
        "provider": {"kind": "mock", "mock_script": str(paths["mock_script"])},
        "pipeline": {"candidate_k": candidate_k},
        "analytics": {"product_list": str(paths["product_list"])},
        "io": {"corpus": str(paths["corpus"]), "out_dir": str(out_dir)},
    }
    paths["run_config"].write_text(json.dumps(run_config, indent=2) + "\n", encoding="utf-8")
    return {name: str(path) for name, path in paths.items()}


def coherence_tree(groups: int = 6, children_per_parent: int = 4) -> Ontology:
    """
    Tree whose children share a distinctive word with their own parent
    and with no other parent
    """
    words = ["alpha", "bravo", "cobalt", "delta", "ember", "falcon", "garnet", "harbor", "indigo", "juniper"]
    facets = ["pricing", "demand", "margins", "capacity", "outlook", "inventory"]
    if groups > len(words) or children_per_parent > len(facets):
        raise ValueError("coherence_tree supports at most 10 groups of 6 children")
    spec = [
        {"name": f"{words[g].title()} Segment", "children": [f"{words[g].title()} {facets[c].title()}" for c in range(children_per_parent)]}
        for g in range(groups)
    ]
    return seed(Ontology(), spec)
