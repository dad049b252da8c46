"""
Ontologist agent for calltopics
Decides whether a retrieved topic already exists (semantic match -> alias)
or where it belongs (top-down parent search -> new node)
"""

import json
import math
from dataclasses import dataclass
from typing import Dict, List, Optional, Sequence, Tuple
from uuid import UUID

import numpy as np
from loguru import logger
from pydantic import BaseModel, ValidationError

from config import PipelineConfig, ProviderConfig
from embeddings import EmbeddingEncoder, cosine_to_rows
from errors import ParameterError, ResponseParseError
from logger import log_topic_decision
from ontology import Ontology, Timestamp, TopicNode, normalize_label
from prompts import TOPIC_EXISTENCE, TOPIC_INSERTION, load_prompt
from providers import ChatProvider, chat_text
from retriever import strip_code_fences
from schemas import MatchPayload, ParentPayload

_OPEN_TAG = "<structured_output>"
_CLOSE_TAG = "</structured_output>"


@dataclass(frozen=True)
class TopicMatch:
    topic: str
    similarity: float


@dataclass(frozen=True)
class MatchReasoning:
    topic: str
    similarity: Optional[float]
    reasoning: str
    parent_subset_check: str


@dataclass(frozen=True)
class MatchDecision:
    """
    Outcome of the existence check. `accepted` is set only when the best
    match clears the threshold and its label is one of the offered candidates;
    `valid` is False when the reply could not be used at all.
    """

    query_topic: str
    matches: Tuple[TopicMatch, ...] = ()
    reasoning: Tuple[MatchReasoning, ...] = ()
    accepted: Optional[UUID] = None
    valid: bool = True


@dataclass(frozen=True)
class ParentDecision:
    query_topic: str
    chosen_parent: Optional[str]
    reasoning: str
    resolved_parent_id: Optional[UUID]
    rounds: int = 0


@dataclass(frozen=True)
class IntegrationResult:
    topic_id: UUID
    outcome: str  # exact | alias | inserted


# ---- message rendering and reply parsing -------------------------------

def render_matcher_message(query: str, candidates: Sequence[TopicNode]) -> str:
    """Every candidate name and alias as a reference topic, then the query"""
    lines = [f"- {label}" for node in candidates for label in node.labels]
    return "Reference topics:\n" + "\n".join(lines) + f"\n\nQuery topic: {query}"


def render_parent_message(query: str, topic_tree: Dict[str, List[str]]) -> str:
    """Input block in the shape the insertion prompt's examples use"""
    return f'Input:\n- Given Topic: "{query}"\n- Topic Tree: {topic_tree!r}'


def _structured_json(text: str) -> dict:
    body = text
    start = body.find(_OPEN_TAG)
    if start != -1:
        body = body[start + len(_OPEN_TAG):]
        end = body.find(_CLOSE_TAG)
        if end != -1:
            body = body[:end]
    body = strip_code_fences(body)
    brace = body.find("{")
    if brace == -1:
        raise ResponseParseError("No JSON object in reply", raw_text=text)
    try:
        obj, _ = json.JSONDecoder().raw_decode(body[brace:])
    except json.JSONDecodeError as e:
        raise ResponseParseError(f"Reply JSON is malformed: {e}", raw_text=text) from e
    if not isinstance(obj, dict):
        raise ResponseParseError("Reply JSON is not an object", raw_text=text)
    return obj


def _parse_payload(text: str, model: type) -> BaseModel:
    try:
        return model.model_validate(_structured_json(text))
    except ValidationError as e:
        raise ResponseParseError(f"Reply has the wrong shape: {str(e).splitlines()[0]}", raw_text=text) from e


def parse_match_response(text: str) -> MatchPayload:
    """Matcher reply; the structured_output wrapper and code fences are optional"""
    return _parse_payload(text, MatchPayload)


def parse_parent_response(text: str) -> ParentPayload:
    return _parse_payload(text, ParentPayload)


# ---- agent steps -------------------------------------------------------

def candidate_topics(
    query: str,
    tree: Ontology,
    embedder: EmbeddingEncoder,
    k: int,
    name_vectors: Optional[Dict[UUID, np.ndarray]] = None,
) -> List[TopicNode]:
    """
    Shortlist the k nodes whose names are closest to the query

    Ranked by cosine similarity of embeddings, ties by normalized name.
    name_vectors is an optional cache of node-name embeddings.
    """
    if k < 1:
        raise ParameterError("k must be >= 1")
    nodes = list(tree.nodes.values())
    if not nodes:
        return []

    cache = name_vectors if name_vectors is not None else {}
    missing = [n for n in nodes if n.topic_id not in cache]
    if missing:
        for node, vector in zip(missing, embedder.embed_matrix([n.name for n in missing])):
            cache[node.topic_id] = vector

    matrix = np.vstack([cache[n.topic_id] for n in nodes])
    query_vector = embedder.embed_matrix([query])[0]
    sims = np.round(cosine_to_rows(query_vector, matrix), 12)
    order = sorted(range(len(nodes)), key=lambda i: (-sims[i], normalize_label(nodes[i].name)))
    return [nodes[i] for i in order[:k]]


def check_exists(
    query: str,
    candidates: Sequence[TopicNode],
    tree: Ontology,
    provider: ChatProvider,
    threshold: int,
    provider_config: Optional[ProviderConfig] = None,
    retry_malformed: bool = True,
) -> MatchDecision:
    """
    Ask the matcher whether query is a true equivalent of a candidate

    Args:
        query: Retrieved topic label
        candidates: Shortlisted nodes (empty -> no-match, no provider call)
        tree: Ontology used to resolve the matched label
        provider: Chat backend
        threshold: Minimum similarity (0-100) to accept

    Returns:
        MatchDecision; accepted holds the resolved topic id on success
    """
    if not candidates:
        return MatchDecision(query_topic=query)

    system_prompt = load_prompt(TOPIC_EXISTENCE)
    message = render_matcher_message(query, candidates)
    attempts = 2 if retry_malformed else 1
    payload = None
    for attempt in range(1, attempts + 1):
        try:
            payload = parse_match_response(chat_text(provider, system_prompt, message, provider_config))
            break
        except ResponseParseError as e:
            logger.warning(f"Malformed matcher reply for {query!r} (attempt {attempt}/{attempts}): {e}")
    if payload is None:
        logger.warning(f"Matcher gave no usable reply for {query!r}; treating as no match")
        return MatchDecision(query_topic=query, valid=False)

    matches = []
    for item in payload.matches:
        if not (math.isfinite(item.similarity) and 0 <= item.similarity <= 100):
            logger.warning(f"Dropping match {item.topic!r} with similarity {item.similarity} outside [0, 100]")
            continue
        matches.append(TopicMatch(item.topic, item.similarity))

    reasoning = ()
    if payload.detailed_analysis is not None:
        reasoning = tuple(
            MatchReasoning(d.topic, d.similarity, d.reasoning, d.parent_subset_check)
            for d in payload.detailed_analysis.matched_topics
        )

    if not matches:
        return MatchDecision(query, (), reasoning)

    best = max(matches, key=lambda m: m.similarity)
    if best.similarity < threshold:
        return MatchDecision(query, tuple(matches), reasoning)

    offered = {normalize_label(label) for node in candidates for label in node.labels}
    if normalize_label(best.topic) not in offered:
        logger.warning(f"Matcher named {best.topic!r} for {query!r}, which was not offered; treating as no match")
        return MatchDecision(query, tuple(matches), reasoning, valid=False)

    node = tree.find_by_name_or_alias(best.topic)
    return MatchDecision(query, tuple(matches), reasoning, accepted=node.topic_id if node else None)


def _ask_parent(
    query: str,
    view: Dict[str, List[str]],
    offered: Dict[str, UUID],
    provider: ChatProvider,
    provider_config: Optional[ProviderConfig],
) -> Tuple[bool, Optional[UUID], str, str]:
    """
    One descent round with a single retry

    Returns (ok, topic_id, label, reasoning); ok with topic_id None is an
    explicit "no suitable parent"
    """
    system_prompt = load_prompt(TOPIC_INSERTION)
    message = render_parent_message(query, view)
    for attempt in (1, 2):
        try:
            payload = parse_parent_response(chat_text(provider, system_prompt, message, provider_config))
        except ResponseParseError as e:
            logger.warning(f"Malformed parent reply for {query!r} (attempt {attempt}/2): {e}")
            continue
        label = (payload.parent or "").strip()
        if not label:
            return True, None, "", payload.reasoning
        topic_id = offered.get(normalize_label(label))
        if topic_id is not None:
            return True, topic_id, label, payload.reasoning
        logger.warning(f"Parent {label!r} for {query!r} was not offered (attempt {attempt}/2)")
    return False, None, "", ""


def choose_parent(
    query: str,
    tree: Ontology,
    provider: ChatProvider,
    provider_config: Optional[ProviderConfig] = None,
) -> ParentDecision:
    """
    Top-down parent search

    Round 1 shows every root with its children. While the chosen node has
    children that may still take a child of their own, the next round shows
    that node with its children. Stops on a leaf, a repeated choice or the
    depth limit. A failed later round keeps the previous round's choice.
    """
    deepest_parent = tree.max_depth - 2
    if deepest_parent < 0 or not tree.root_ids:
        return ParentDecision(query, None, "no level can take a child", None, 0)

    view: Dict[str, List[str]] = {}
    offered: Dict[str, UUID] = {}
    for root in tree.roots():
        children = tree.children(root.topic_id) if deepest_parent >= 1 else []
        view[root.name] = [c.name for c in children]
        offered[normalize_label(root.name)] = root.topic_id
        offered.update((normalize_label(c.name), c.topic_id) for c in children)

    ok, chosen_id, label, reasoning = _ask_parent(query, view, offered, provider, provider_config)
    rounds = 1
    if not ok:
        logger.warning(f"No valid parent for {query!r}; inserting at root level")
        return ParentDecision(query, None, "no valid parent label", None, rounds)
    if chosen_id is None:
        return ParentDecision(query, None, reasoning, None, rounds)

    while True:
        node = tree.get(chosen_id)
        if node.is_leaf or tree.depth(chosen_id) >= deepest_parent:
            break
        children = tree.children(chosen_id)
        view = {node.name: [c.name for c in children]}
        offered = {normalize_label(node.name): chosen_id}
        offered.update((normalize_label(c.name), c.topic_id) for c in children)

        ok, next_id, next_label, next_reasoning = _ask_parent(query, view, offered, provider, provider_config)
        rounds += 1
        if not ok:
            logger.warning(f"Descent for {query!r} failed below {node.name!r}; keeping it as parent")
            break
        if next_id is None or next_id == chosen_id:
            break
        chosen_id, label, reasoning = next_id, next_label, next_reasoning

    parent = tree.get(chosen_id)
    return ParentDecision(query, parent.name, reasoning, chosen_id, rounds)


def integrate_topic(
    query: str,
    tree: Ontology,
    chat_provider: ChatProvider,
    embedder: EmbeddingEncoder,
    config: PipelineConfig,
    now: Timestamp,
    provider_config: Optional[ProviderConfig] = None,
    name_vectors: Optional[Dict[UUID, np.ndarray]] = None,
) -> IntegrationResult:
    """
    Resolve a retrieved topic to a node id, growing the tree if needed

    1. exact name/alias lookup (no provider call)
    2. shortlist + semantic match -> alias on the matched node
    3. top-down parent search -> new node
    """
    label = query.strip()
    if not label:
        raise ParameterError("Topic label must not be blank")

    node = tree.find_by_name_or_alias(label)
    if node is not None:
        log_topic_decision(label, "exact", str(node.topic_id))
        return IntegrationResult(node.topic_id, "exact")

    candidates = candidate_topics(label, tree, embedder, config.candidate_k, name_vectors)
    decision = check_exists(
        label, candidates, tree, chat_provider, config.match_threshold,
        provider_config, config.retry_malformed_json,
    )
    if decision.accepted is not None:
        tree.add_alias(decision.accepted, label, now)
        log_topic_decision(label, "alias", str(decision.accepted))
        return IntegrationResult(decision.accepted, "alias")

    parent = choose_parent(label, tree, chat_provider, provider_config)
    parent_id = parent.resolved_parent_id
    while parent_id is not None and tree.depth(parent_id) > tree.max_depth - 2:
        parent_id = tree.get(parent_id).parent_id

    node = tree.insert_node(label, parent_id, now)
    log_topic_decision(label, "inserted", str(node.topic_id))
    return IntegrationResult(node.topic_id, "inserted")


class Ontologist:
    """Binds the agent steps to one tree, its providers and a name-vector cache"""

    def __init__(
        self,
        tree: Ontology,
        chat_provider: ChatProvider,
        embedder: EmbeddingEncoder,
        config: Optional[PipelineConfig] = None,
        provider_config: Optional[ProviderConfig] = None,
    ):
        self.tree = tree
        self.chat_provider = chat_provider
        self.embedder = embedder
        self.config = config or PipelineConfig()
        self.provider_config = provider_config
        self._name_vectors: Dict[UUID, np.ndarray] = {}

    def candidate_topics(self, query: str, k: Optional[int] = None) -> List[TopicNode]:
        return candidate_topics(query, self.tree, self.embedder, k or self.config.candidate_k, self._name_vectors)

    def check_exists(self, query: str, candidates: Sequence[TopicNode]) -> MatchDecision:
        return check_exists(
            query, candidates, self.tree, self.chat_provider, self.config.match_threshold,
            self.provider_config, self.config.retry_malformed_json,
        )

    def choose_parent(self, query: str) -> ParentDecision:
        return choose_parent(query, self.tree, self.chat_provider, self.provider_config)

    def integrate_topic(self, query: str, now: Timestamp) -> IntegrationResult:
        return integrate_topic(
            query, self.tree, self.chat_provider, self.embedder, self.config, now,
            self.provider_config, self._name_vectors,
        )
