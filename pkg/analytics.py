"""
Insight analytics for calltopics
Mention series, trends, competitor similarity, emerging topics,
discovery timeline, ontology coherence and product filtering
"""

import json
from dataclasses import dataclass, field
from datetime import date
from pathlib import Path
from typing import Any, Dict, FrozenSet, Iterable, List, Mapping, Optional, Sequence, Set, Tuple, Union
from uuid import UUID

import numpy as np
import pandas as pd
from loguru import logger

from config import (
    LOESS_DEGREE,
    LOESS_SPAN,
    MIN_LATE_MENTIONS,
    TOP_N_TOPICS,
    TREND_ALPHA,
    TREND_MIN_QUARTERS,
    ProviderConfig,
)
from corpus import TranscriptDocument, quarter_ordinal, quarter_span
from embeddings import EmbeddingEncoder, cosine_similarity
from errors import ConfigError, IngestError, InsufficientDataError, NotFoundError, ParameterError, ProviderError
from ontology import Ontology, normalize_label
from prompts import PRODUCT_CLASSIFIER, load_prompt
from providers import ChatProvider, chat_text
from trend_stats import kendall_tau, loess_smooth

FRAME_COLUMNS = ["topic_id", "ticker", "fiscal_quarter", "call_date", "para_id", "doc_id", "excerpt"]
MAX_COHERENCE_CHILDREN = 5


@dataclass(frozen=True)
class MentionData:
    """
    Enrichments joined with their documents

    frame: one row per enrichment (FRAME_COLUMNS)
    coverage: ticker -> fiscal quarters the corpus holds a call for
    sectors: ticker -> sector
    date_range: first and last call date of the corpus
    """

    frame: pd.DataFrame
    coverage: Mapping[str, Tuple[str, ...]]
    sectors: Mapping[str, str] = field(default_factory=dict)
    date_range: Optional[Tuple[date, date]] = None

    @classmethod
    def from_enrichments(cls, enrichments: Iterable[Any], corpus: Sequence[TranscriptDocument]) -> "MentionData":
        documents = {doc.doc_id: doc for doc in corpus}
        rows = []
        for e in enrichments:
            doc = documents.get(e.doc_id)
            if doc is None:
                raise IngestError(f"Enrichment {e.para_id} cites unknown document {e.doc_id}")
            rows.append({
                "topic_id": e.topic_id,
                "ticker": doc.ticker,
                "fiscal_quarter": doc.fiscal_quarter,
                "call_date": e.call_date,
                "para_id": e.para_id,
                "doc_id": e.doc_id,
                "excerpt": e.excerpt,
            })
        coverage: Dict[str, Set[str]] = {}
        for doc in corpus:
            coverage.setdefault(doc.ticker, set()).add(doc.fiscal_quarter)
        sectors = {doc.ticker: doc.sector for doc in corpus}
        call_dates = [doc.call_date for doc in corpus]
        date_range = (min(call_dates), max(call_dates)) if call_dates else None
        return cls.from_rows(rows, coverage, sectors, date_range)

    @classmethod
    def from_rows(
        cls,
        rows: Iterable[Mapping[str, Any]],
        coverage: Optional[Mapping[str, Iterable[str]]] = None,
        sectors: Optional[Mapping[str, str]] = None,
        date_range: Optional[Tuple[date, date]] = None,
    ) -> "MentionData":
        """Build from plain rows; coverage and date_range default to what the rows show"""
        frame = pd.DataFrame(list(rows), columns=FRAME_COLUMNS)
        for column, default in (("para_id", ""), ("doc_id", ""), ("excerpt", "")):
            frame[column] = frame[column].fillna(default)
        if coverage is None:
            coverage = frame.groupby("ticker")["fiscal_quarter"].agg(set).to_dict() if len(frame) else {}
        ordered = {t: tuple(sorted(set(q), key=quarter_ordinal)) for t, q in coverage.items()}
        if date_range is None and len(frame):
            dates = pd.to_datetime(frame["call_date"]).dt.date
            date_range = (dates.min(), dates.max())
        return cls(frame=frame, coverage=ordered, sectors=dict(sectors or {}), date_range=date_range)

    def companies(self) -> List[str]:
        return sorted(self.coverage)

    def quarter_range(self, company: str) -> List[str]:
        quarters = self.coverage.get(company, ())
        if not quarters:
            return []
        return quarter_span(quarters[0], quarters[-1])

    def for_company(self, company: str) -> pd.DataFrame:
        return self.frame[self.frame["ticker"] == company]


@dataclass(frozen=True)
class MentionSeries:
    topic_id: UUID
    company: str
    points: Tuple[Tuple[str, int], ...]

    @property
    def counts(self) -> List[int]:
        return [c for _, c in self.points]


@dataclass(frozen=True)
class TrendResult:
    topic_id: UUID
    topic: str
    company: str
    tau: float
    p_value: float
    direction: str

    def to_dict(self) -> Dict[str, Any]:
        return {
            "topic_id": str(self.topic_id),
            "topic": self.topic,
            "company": self.company,
            "tau": self.tau,
            "p_value": self.p_value,
            "direction": self.direction,
        }


@dataclass(frozen=True)
class TrendReport:
    company: str
    alpha: float
    trending_up: Tuple[TrendResult, ...]
    trending_down: Tuple[TrendResult, ...]
    skipped: Tuple[Tuple[UUID, str], ...] = ()

    def to_dict(self) -> Dict[str, Any]:
        return {
            "company": self.company,
            "alpha": self.alpha,
            "trending_up": [r.to_dict() for r in self.trending_up],
            "trending_down": [r.to_dict() for r in self.trending_down],
            "skipped": [{"topic_id": str(t), "reason": r} for t, r in self.skipped],
        }


@dataclass(frozen=True)
class JaccardMatrix:
    companies: Tuple[str, ...]
    values: np.ndarray

    def to_dict(self) -> Dict[str, Any]:
        return {"companies": list(self.companies), "values": self.values.tolist()}

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame(self.values, index=list(self.companies), columns=list(self.companies))


@dataclass(frozen=True)
class EmergingTopic:
    topic_id: UUID
    topic: str
    early_count: int
    late_count: int

    def to_dict(self) -> Dict[str, Any]:
        return {"topic_id": str(self.topic_id), "topic": self.topic, "early_count": self.early_count, "late_count": self.late_count}


@dataclass(frozen=True)
class CoherenceRow:
    parent_name: str
    sampled_children: Tuple[str, ...]
    avg_cos_true: float
    random_parent_name: str
    avg_cos_random: float


@dataclass(frozen=True)
class CoherenceReport:
    rows: Tuple[CoherenceRow, ...]
    overall_true_avg: float
    overall_random_avg: float

    def to_dict(self) -> Dict[str, Any]:
        return {
            "rows": [
                {
                    "parent_name": r.parent_name,
                    "sampled_children": list(r.sampled_children),
                    "avg_cos_true": r.avg_cos_true,
                    "random_parent_name": r.random_parent_name,
                    "avg_cos_random": r.avg_cos_random,
                }
                for r in self.rows
            ],
            "overall_true_avg": self.overall_true_avg,
            "overall_random_avg": self.overall_random_avg,
        }


def topic_label(topic_id: UUID, tree: Optional[Ontology]) -> str:
    if tree is not None and topic_id in tree:
        return tree.get(topic_id).name
    return str(topic_id)


def _sort_key(topic_id: UUID, tree: Optional[Ontology]) -> str:
    return normalize_label(topic_label(topic_id, tree))


# ---- mention series and trends -----------------------------------------

def mention_series(
    data: MentionData,
    topic_id: UUID,
    company: str,
    quarter_range: Optional[Sequence[str]] = None,
    rollup: bool = False,
    tree: Optional[Ontology] = None,
    count_mode: str = "mention",
) -> MentionSeries:
    """
    Per-quarter mention counts of a topic for one company

    Args:
        data: Enrichments joined with documents
        topic_id: Topic to count
        company: Ticker
        quarter_range: Ordered quarters; defaults to the company's covered span
        rollup: Also count descendants of the topic (needs tree)
        tree: Ontology used to validate the topic and find descendants
        count_mode: "mention" (one per enrichment) or "paragraph"

    Returns:
        One zero-filled point per quarter
    """
    if tree is not None and topic_id not in tree:
        raise NotFoundError(f"Unknown topic id: {topic_id}")
    if rollup and tree is None:
        raise ParameterError("rollup needs the ontology")
    if count_mode not in ("mention", "paragraph"):
        raise ParameterError(f"Unknown count_mode {count_mode!r}")

    quarters = list(quarter_range) if quarter_range is not None else data.quarter_range(company)
    if not quarters:
        raise ParameterError(f"No quarter range for {company}")
    ordinals = [quarter_ordinal(q) for q in quarters]
    if any(b <= a for a, b in zip(ordinals, ordinals[1:])):
        raise ParameterError("quarter_range must be strictly increasing")

    ids = {topic_id}
    if rollup:
        ids.update(node.topic_id for node in tree.descendants(topic_id))

    rows = data.for_company(company)
    rows = rows[rows["topic_id"].isin(ids)]
    if count_mode == "paragraph":
        counts = rows.groupby("fiscal_quarter")["para_id"].nunique()
    else:
        counts = rows.groupby("fiscal_quarter").size()
    counts = counts.reindex(quarters, fill_value=0)
    return MentionSeries(topic_id, company, tuple((q, int(counts[q])) for q in quarters))


def classify_trend(tau: float, p_value: float, alpha: float) -> str:
    if p_value <= alpha and tau > 0:
        return "up"
    if p_value <= alpha and tau < 0:
        return "down"
    return "none"


def _trend_order(result: TrendResult) -> Tuple[float, str]:
    return (-abs(result.tau), normalize_label(result.topic))


def detect_trends(
    data: MentionData,
    company: str,
    tree: Optional[Ontology] = None,
    topics: Optional[Iterable[UUID]] = None,
    alpha: float = TREND_ALPHA,
    product_filter: FrozenSet[UUID] = frozenset(),
    min_quarters: int = TREND_MIN_QUARTERS,
    rollup: bool = False,
    count_mode: str = "mention",
) -> TrendReport:
    """
    Classify each topic's mention series for a company as up, down or none

    Products are excluded; topics of a company with fewer than min_quarters
    covered quarters are skipped and reported. Lists are sorted by |tau|
    descending, then by topic name.
    """
    if not 0 < alpha < 1:
        raise ParameterError("alpha must be in (0, 1)")

    if topics is None:
        topics = data.for_company(company)["topic_id"].unique().tolist()
    topics = sorted(set(topics), key=lambda t: (_sort_key(t, tree), str(t)))

    covered = len(data.coverage.get(company, ()))
    up, down, skipped = [], [], []
    for topic_id in topics:
        if topic_id in product_filter:
            skipped.append((topic_id, "product"))
            continue
        if covered < max(min_quarters, 3):
            skipped.append((topic_id, f"only {covered} covered quarters"))
            continue
        series = mention_series(data, topic_id, company, rollup=rollup, tree=tree, count_mode=count_mode)
        tau, p_value = kendall_tau(series.counts)
        direction = classify_trend(tau, p_value, alpha)
        result = TrendResult(topic_id, topic_label(topic_id, tree), company, tau, p_value, direction)
        if direction == "up":
            up.append(result)
        elif direction == "down":
            down.append(result)

    logger.info(f"Trends for {company}: {len(up)} up, {len(down)} down, {len(skipped)} skipped")
    return TrendReport(company, alpha, tuple(sorted(up, key=_trend_order)), tuple(sorted(down, key=_trend_order)), tuple(skipped))


def trend_series_export(
    data: MentionData,
    topic_id: UUID,
    companies: Sequence[str],
    tree: Optional[Ontology] = None,
    span: float = LOESS_SPAN,
    degree: int = LOESS_DEGREE,
    rollup: bool = False,
    count_mode: str = "mention",
) -> pd.DataFrame:
    """Raw and LOESS-smoothed quarterly series of one topic for several companies"""
    frames = []
    for company in companies:
        series = mention_series(data, topic_id, company, rollup=rollup, tree=tree, count_mode=count_mode)
        points = [(float(i), float(c)) for i, c in enumerate(series.counts)]
        try:
            smoothed = [s for _, s in loess_smooth(points, span, degree)]
        except ParameterError as e:
            logger.warning(f"Not smoothing {company} series: {e}")
            smoothed = [None] * len(points)
        frames.append(pd.DataFrame({
            "topic_id": str(topic_id),
            "topic": topic_label(topic_id, tree),
            "company": company,
            "fiscal_quarter": [q for q, _ in series.points],
            "count": series.counts,
            "smoothed": smoothed,
        }))
    if not frames:
        return pd.DataFrame(columns=["topic_id", "topic", "company", "fiscal_quarter", "count", "smoothed"])
    return pd.concat(frames, ignore_index=True)


def topic_excerpts(data: MentionData, topic_id: UUID, company: Optional[str] = None) -> List[Dict[str, Any]]:
    """Excerpts behind a topic's counts, in call order"""
    rows = data.frame[data.frame["topic_id"] == topic_id]
    if company is not None:
        rows = rows[rows["ticker"] == company]
    rows = rows.sort_values(["call_date", "ticker", "para_id"], kind="stable")
    return [
        {"ticker": r.ticker, "fiscal_quarter": r.fiscal_quarter, "para_id": r.para_id, "excerpt": r.excerpt}
        for r in rows.itertuples(index=False)
    ]


# ---- competitor similarity ---------------------------------------------

def top_topics(
    data: MentionData,
    company: str,
    n: int = TOP_N_TOPICS,
    tree: Optional[Ontology] = None,
    product_filter: FrozenSet[UUID] = frozenset(),
) -> List[UUID]:
    """Most mentioned non-product topics of a company, ties by name"""
    if n < 1:
        raise ParameterError("n must be >= 1")
    counts = data.for_company(company)["topic_id"].value_counts()
    ranked = sorted(
        (t for t in counts.index if t not in product_filter),
        key=lambda t: (-int(counts[t]), _sort_key(t, tree), str(t)),
    )
    return ranked[:n]


def jaccard(a: Iterable[Any], b: Iterable[Any]) -> float:
    """|a & b| / |a | b|; two empty sets count as identical"""
    a, b = set(a), set(b)
    union = a | b
    if not union:
        return 1.0
    return len(a & b) / len(union)


def jaccard_matrix(
    data: MentionData,
    companies: Sequence[str],
    n: int = TOP_N_TOPICS,
    tree: Optional[Ontology] = None,
    product_filter: FrozenSet[UUID] = frozenset(),
) -> JaccardMatrix:
    """Pairwise Jaccard similarity of the companies' top-n topic sets"""
    companies = list(companies)
    if len(companies) < 2:
        raise ParameterError("jaccard_matrix needs at least 2 companies")

    tops = [set(top_topics(data, c, n, tree, product_filter)) for c in companies]
    size = len(companies)
    values = np.eye(size)
    for i in range(size):
        for j in range(i + 1, size):
            values[i, j] = values[j, i] = jaccard(tops[i], tops[j])
    return JaccardMatrix(tuple(companies), values)


def sector_jaccard_matrices(
    data: MentionData,
    n: int = TOP_N_TOPICS,
    tree: Optional[Ontology] = None,
    product_filter: FrozenSet[UUID] = frozenset(),
) -> Dict[str, JaccardMatrix]:
    """One matrix per sector holding at least two companies"""
    by_sector: Dict[str, List[str]] = {}
    for company in data.companies():
        by_sector.setdefault(data.sectors.get(company, ""), []).append(company)
    return {
        sector: jaccard_matrix(data, members, n, tree, product_filter)
        for sector, members in sorted(by_sector.items())
        if len(members) >= 2
    }


def _labels(topic_ids: Iterable[UUID], tree: Ontology, leaf_only: bool) -> List[str]:
    nodes = [tree.get(t) for t in topic_ids if t in tree]
    if leaf_only:
        nodes = [node for node in nodes if node.is_leaf]
    return sorted((node.name for node in nodes), key=normalize_label)


def common_topics(
    data: MentionData,
    company_a: str,
    company_b: str,
    tree: Ontology,
    n: int = TOP_N_TOPICS,
    leaf_only: bool = False,
    product_filter: FrozenSet[UUID] = frozenset(),
) -> List[str]:
    """Names of topics in both companies' top-n, sorted"""
    shared = set(top_topics(data, company_a, n, tree, product_filter)) & set(top_topics(data, company_b, n, tree, product_filter))
    return _labels(shared, tree, leaf_only)


def unique_topics(
    data: MentionData,
    company: str,
    competitors: Sequence[str],
    tree: Ontology,
    n: int = TOP_N_TOPICS,
    leaf_only: bool = False,
    product_filter: FrozenSet[UUID] = frozenset(),
) -> List[str]:
    """Topics in the company's top-n that no competitor has in its top-n"""
    own = set(top_topics(data, company, n, tree, product_filter))
    for competitor in competitors:
        own -= set(top_topics(data, competitor, n, tree, product_filter))
    return _labels(own, tree, leaf_only)


def common_topics_report(
    data: MentionData,
    tree: Ontology,
    anchor: str,
    competitors: Sequence[str],
    n: int = TOP_N_TOPICS,
    product_filter: FrozenSet[UUID] = frozenset(),
) -> List[Dict[str, Any]]:
    """Per competitor: leaf topics shared with the anchor company and their count"""
    rows = []
    for competitor in competitors:
        shared = common_topics(data, anchor, competitor, tree, n, leaf_only=True, product_filter=product_filter)
        rows.append({"competitor": competitor, "common_topics": shared, "count": len(shared)})
    return rows


# ---- emerging topics and discovery -------------------------------------

def emerging_topics(
    data: MentionData,
    split: date,
    min_late_mentions: int = MIN_LATE_MENTIONS,
    tree: Optional[Ontology] = None,
    product_filter: FrozenSet[UUID] = frozenset(),
    end: Optional[date] = None,
) -> List[EmergingTopic]:
    """
    Topics never mentioned before split and mentioned at least
    min_late_mentions times from split on (up to end, inclusive)
    """
    if min_late_mentions < 1:
        raise ParameterError("min_late_mentions must be >= 1")
    if data.date_range is not None:
        first, last = data.date_range
        if not first <= split <= last:
            raise ParameterError(f"split {split} outside corpus dates {first}..{last}")
    frame = data.frame
    if frame.empty:
        return []

    dates = pd.to_datetime(frame["call_date"]).dt.date
    early = frame[dates < split]["topic_id"].value_counts()
    late_mask = dates >= split
    if end is not None:
        late_mask &= dates <= end
    late = frame[late_mask]["topic_id"].value_counts()

    found = [
        EmergingTopic(t, topic_label(t, tree), 0, int(count))
        for t, count in late.items()
        if count >= min_late_mentions and t not in early.index and t not in product_filter
    ]
    return sorted(found, key=lambda e: (-e.late_count, normalize_label(e.topic)))


def discovery_timeline(
    tree: Ontology,
    smooth: Optional[Tuple[float, int]] = None,
) -> List[Dict[str, Any]]:
    """
    New (non-seed) topics per created_on date, ascending

    Args:
        tree: Ontology with logical created_on dates
        smooth: Optional (span, degree) for a LOESS overlay

    Returns:
        [{"day", "new_topics", "smoothed"}]
    """
    counts: Dict[date, int] = {}
    for node in tree.nodes.values():
        if tree.is_seed(node.topic_id):
            continue
        day = node.created_on.date()
        counts[day] = counts.get(day, 0) + 1

    points = [{"day": day, "new_topics": counts[day], "smoothed": None} for day in sorted(counts)]
    if smooth is not None and points:
        span, degree = smooth
        try:
            fitted = loess_smooth([(float(p["day"].toordinal()), float(p["new_topics"])) for p in points], span, degree)
        except ParameterError as e:
            logger.warning(f"Timeline not smoothed: {e}")
        else:
            for point, (_, value) in zip(points, fitted):
                point["smoothed"] = value
    return points


# ---- ontology coherence -------------------------------------------------

def coherence_eval(tree: Ontology, embedder: EmbeddingEncoder, num_parents: int, rng_seed: int) -> CoherenceReport:
    """
    Parent-child embedding similarity against a random-parent baseline

    Samples num_parents parents with at least two children, takes up to
    five children each (child order), and compares the mean cosine to the
    true parent with the mean cosine to a different, randomly drawn parent.
    """
    if num_parents < 1:
        raise ParameterError("num_parents must be >= 1")
    parents = [node for node in tree.walk() if node.child_ids]
    eligible = [node for node in parents if len(node.child_ids) >= 2]
    if len(eligible) < num_parents or len(parents) < 2:
        raise InsufficientDataError(
            f"coherence_eval needs {num_parents} parents with 2+ children and 2+ parents overall; "
            f"tree has {len(eligible)} and {len(parents)}"
        )

    rng = np.random.default_rng(rng_seed)
    picks = rng.choice(len(eligible), size=num_parents, replace=False)

    vectors: Dict[str, np.ndarray] = {}

    def vector(name: str) -> np.ndarray:
        if name not in vectors:
            vectors[name] = embedder.embed_matrix([name])[0]
        return vectors[name]

    rows = []
    for index in picks:
        parent = eligible[int(index)]
        children = [c.name for c in tree.children(parent.topic_id)[:MAX_COHERENCE_CHILDREN]]
        others = [p for p in parents if p.topic_id != parent.topic_id]
        random_parent = others[int(rng.integers(len(others)))]
        avg_true = float(np.mean([cosine_similarity(vector(parent.name), vector(c)) for c in children]))
        avg_random = float(np.mean([cosine_similarity(vector(random_parent.name), vector(c)) for c in children]))
        rows.append(CoherenceRow(parent.name, tuple(children), avg_true, random_parent.name, avg_random))

    report = CoherenceReport(
        rows=tuple(rows),
        overall_true_avg=float(np.mean([r.avg_cos_true for r in rows])),
        overall_random_avg=float(np.mean([r.avg_cos_random for r in rows])),
    )
    logger.info(f"Coherence: true {report.overall_true_avg:.3f} vs random {report.overall_random_avg:.3f}")
    return report


# ---- product topics -----------------------------------------------------

def load_product_list(path: Union[str, Path]) -> List[str]:
    """Product names from a JSON list or a text file (one per line, # comments)"""
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as e:
        raise ConfigError(f"Cannot read product list {path}: {e}") from e
    if path.suffix.lower() == ".json":
        try:
            names = json.loads(text)
        except json.JSONDecodeError as e:
            raise ConfigError(f"Invalid product list {path}: {e}") from e
        if not isinstance(names, list) or not all(isinstance(n, str) for n in names):
            raise ConfigError(f"Product list {path} must be a JSON list of strings")
        return names
    return [line.strip() for line in text.splitlines() if line.strip() and not line.lstrip().startswith("#")]


def classify_product_topics(
    tree: Ontology,
    product_names: Iterable[str] = (),
    chat_provider: Optional[ChatProvider] = None,
    provider_config: Optional[ProviderConfig] = None,
) -> FrozenSet[UUID]:
    """
    Topic ids to exclude as products

    Union of the configured names that resolve in the tree and, when a
    chat provider is given, every topic it labels a product. A provider
    failure falls back to the configured list alone.
    """
    products = set()
    for name in product_names:
        node = tree.find_by_name_or_alias(name)
        if node is None:
            logger.debug(f"Product {name!r} is not in the ontology")
            continue
        products.add(node.topic_id)
    configured = frozenset(products)

    if chat_provider is None:
        return configured

    system_prompt = load_prompt(PRODUCT_CLASSIFIER)
    try:
        for node in tree.walk():
            answer = chat_text(chat_provider, system_prompt, node.name, provider_config)
            if answer.strip().lower().startswith("yes"):
                products.add(node.topic_id)
    except ProviderError as e:
        logger.warning(f"Product classifier failed ({e}); using the configured product list only")
        return configured
    return frozenset(products)


# ---- export ---------------------------------------------------------------

def write_table(rows: Union[pd.DataFrame, Sequence[Mapping[str, Any]]], path: Union[str, Path]) -> Path:
    """CSV export of a report table"""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    frame = rows if isinstance(rows, pd.DataFrame) else pd.DataFrame(list(rows))
    frame.to_csv(path, index=False, lineterminator="\n")
    return path
