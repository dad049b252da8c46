"""
Chat providers for calltopics
An OpenAI-compatible HTTP backend for real runs and a deterministic,
scripted mock so every agent step can run offline
"""

import ast
import hashlib
import json
import math
import re
import time
from abc import ABC, abstractmethod
from dataclasses import dataclass, field
from pathlib import Path
from types import MappingProxyType
from typing import Any, Callable, Dict, List, Mapping, Optional, Tuple, Union

import httpx
from loguru import logger

from config import ProviderConfig
from errors import ConfigError, ProviderError, UnscriptedPromptError
from logger import log_provider_call
from ontology import normalize_label as normalize_text
from prompts import PRODUCT_CLASSIFIER, TOPIC_EXISTENCE, TOPIC_INSERTION, TOPIC_RETRIEVER, prompt_kind

RETRYABLE_STATUS = {429, 500, 502, 503, 504}

# Keyword -> topic table the mock uses on retriever prompts
DEFAULT_KEYWORD_RULES = {
    "supply chain": "Supply Chain",
    "guidance": "Guidance",
    "cutting costs": "Cost Reduction",
    "cost reduction": "Cost Reduction",
    "take cost out": "Cost Reduction",
    "dividend": "Dividends",
    "buyback": "Buybacks",
    "capex": "Capital Expenditures",
    "data center": "Data Center",
    "generative ai": "Generative AI",
    "self-driving": "Full Self-Driving (FSD)",
    "zero interventions": "Full Self-Driving (FSD)",
    "m&a": "M&A",
    "acquisition": "Mergers & Acquisitions",
    "inflation": "Inflation",
    "market share": "Market Share",
    "pricing": "Pricing",
    "enterprise customers": "Enterprise Adoption",
}

_SENTENCE_SPLIT = re.compile(r"(?<=[.!?])\s+")
_QUERY_TOPIC = re.compile(r"Query topic:\s*(.+?)\s*$", re.MULTILINE)
_GIVEN_TOPIC = re.compile(r'Given Topic:\s*"(.*)"\s*$', re.MULTILINE)
_TOPIC_TREE = re.compile(r"Topic Tree:\s*(\{.*\})\s*$", re.MULTILINE)


@dataclass(frozen=True)
class ChatRequest:
    system_prompt: str
    user_message: str
    temperature: float = 0.0
    max_output_tokens: int = 1024

    def __post_init__(self):
        if not self.system_prompt.strip() or not self.user_message.strip():
            raise ValueError("ChatRequest prompts must be non-empty")
        if not math.isfinite(self.temperature) or not 0 <= self.temperature <= 2:
            raise ValueError("temperature must be finite and in [0, 2]")
        if self.max_output_tokens < 1:
            raise ValueError("max_output_tokens must be positive")


@dataclass(frozen=True)
class ChatResponse:
    text: str
    provider_meta: Mapping[str, Any] = field(default_factory=dict)


class ChatProvider(ABC):
    """Base interface for chat-completion backends"""

    @abstractmethod
    def chat(self, request: ChatRequest) -> ChatResponse:
        """Return the model's reply verbatim"""

    @property
    @abstractmethod
    def name(self) -> str:
        pass


def prompt_hash(request: ChatRequest) -> str:
    """Stable key for a (system, user) prompt pair"""
    digest = hashlib.sha256()
    digest.update(request.system_prompt.encode("utf-8"))
    digest.update(b"\x00")
    digest.update(request.user_message.encode("utf-8"))
    return digest.hexdigest()


def post_json(
    client: httpx.Client,
    url: str,
    payload: Dict[str, Any],
    config: ProviderConfig,
    kind: str,
    sleep: Callable[[float], None] = time.sleep,
) -> Dict[str, Any]:
    """
    POST a JSON body with the retry policy shared by chat and embeddings

    Transport failures, 429 and 5xx are retried up to config.max_retries
    times with exponential backoff; other 4xx responses are terminal.
    """
    attempts = config.max_retries + 1
    headers = {"Authorization": f"Bearer {config.api_key() or ''}", "Content-Type": "application/json"}
    last_error: Optional[ProviderError] = None

    for attempt in range(1, attempts + 1):
        try:
            response = client.post(url, json=payload, headers=headers)
        except httpx.TransportError as e:
            last_error = ProviderError(f"{kind} transport failure: {e}", retryable=True)
            log_provider_call(kind, attempt, f"transport error {type(e).__name__}")
        else:
            status = response.status_code
            if status < 400:
                log_provider_call(kind, attempt, str(status))
                try:
                    return response.json()
                except ValueError as e:
                    raise ProviderError(f"{kind} returned non-JSON body", status=status) from e
            if status not in RETRYABLE_STATUS:
                raise ProviderError(f"{kind} request rejected with HTTP {status}: {response.text[:200]}", status=status)
            last_error = ProviderError(f"{kind} request failed with HTTP {status}", status=status, retryable=True)
            log_provider_call(kind, attempt, str(status))

        if attempt < attempts:
            delay = config.retry_backoff * (2 ** (attempt - 1))
            logger.warning(f"{kind} attempt {attempt}/{attempts} failed, retrying in {delay:.1f}s")
            sleep(delay)

    raise last_error


def make_http_client(config: ProviderConfig) -> httpx.Client:
    if not config.api_key():
        raise ConfigError(f"{config.api_key_env_var} not set in environment")
    return httpx.Client(timeout=config.timeout)


class HttpChatProvider(ChatProvider):
    """OpenAI-compatible /chat/completions client"""

    def __init__(self, config: ProviderConfig, client: Optional[httpx.Client] = None, sleep: Callable[[float], None] = time.sleep):
        self.config = config
        self.client = client or make_http_client(config)
        self._sleep = sleep
        self._url = config.endpoint_url.rstrip("/") + "/chat/completions"
        logger.info(f"Initialized chat provider: {config.model_name} @ {config.endpoint_url}")

    @property
    def name(self) -> str:
        return f"http:{self.config.model_name}"

    def chat(self, request: ChatRequest) -> ChatResponse:
        payload = {
            "model": self.config.model_name,
            "messages": [
                {"role": "system", "content": request.system_prompt},
                {"role": "user", "content": request.user_message},
            ],
            "temperature": request.temperature,
            "max_tokens": request.max_output_tokens,
        }
        data = post_json(self.client, self._url, payload, self.config, "chat", sleep=self._sleep)
        try:
            text = data["choices"][0]["message"]["content"]
        except (KeyError, IndexError, TypeError) as e:
            raise ProviderError(f"chat response missing choices[0].message.content: {e}") from e
        if not isinstance(text, str):
            raise ProviderError(f"chat response content is {type(text).__name__}, not text")
        return ChatResponse(
            text=text,
            provider_meta={"model": data.get("model", self.config.model_name), "usage": data.get("usage", {})},
        )


@dataclass(frozen=True)
class MockScript:
    """
    Rules for the mock provider. Lookup order for every request:
    exact `responses` (keyed by user message or prompt hash), then the
    rule set for the recognised prompt kind.

    matcher: normalized query topic -> list of {"topic", "similarity"} matches
    ontologist: normalized query topic -> parent label path (super-parent first);
                an empty path means "no suitable parent"
    """

    responses: Mapping[str, str] = field(default_factory=dict)
    keyword_rules: Tuple[Tuple[str, str], ...] = ()
    matcher: Mapping[str, Tuple[Tuple[str, int], ...]] = field(default_factory=dict)
    matcher_default: Optional[str] = None
    ontologist: Mapping[str, Tuple[str, ...]] = field(default_factory=dict)
    ontologist_default: Optional[str] = None
    product_names: frozenset = frozenset()

    @classmethod
    def from_dict(cls, data: Mapping[str, Any]) -> "MockScript":
        """Build from the mock-script JSON format"""
        allowed = {"responses", "keyword_rules", "matcher", "matcher_default", "ontologist", "ontologist_default", "product_names"}
        unknown = set(data) - allowed
        if unknown:
            raise ConfigError(f"Unknown mock script keys: {sorted(unknown)}")

        rules = data.get("keyword_rules", {})
        if rules == "default":
            rules = DEFAULT_KEYWORD_RULES
        keyword_rules = tuple((k.lower(), v) for k, v in (rules.items() if isinstance(rules, Mapping) else rules))

        matcher = {}
        for query, matches in data.get("matcher", {}).items():
            if isinstance(matches, Mapping):
                matches = [{"topic": t, "similarity": s} for t, s in matches.items()]
            matcher[normalize_text(query)] = tuple((m["topic"], int(m["similarity"])) for m in matches)

        ontologist = {}
        for query, path in data.get("ontologist", {}).items():
            if path is None:
                path = []
            elif isinstance(path, str):
                path = [path]
            ontologist[normalize_text(query)] = tuple(path)

        for key, allowed_values in (("matcher_default", (None, "no_match")), ("ontologist_default", (None, "root"))):
            if data.get(key) not in allowed_values:
                raise ConfigError(f"{key} must be one of {allowed_values}")

        return cls(
            responses=MappingProxyType(dict(data.get("responses", {}))),
            keyword_rules=keyword_rules,
            matcher=MappingProxyType(matcher),
            matcher_default=data.get("matcher_default"),
            ontologist=MappingProxyType(ontologist),
            ontologist_default=data.get("ontologist_default"),
            product_names=frozenset(normalize_text(n) for n in data.get("product_names", [])),
        )

    @classmethod
    def default(cls) -> "MockScript":
        return cls.from_dict({
            "keyword_rules": "default",
            "matcher_default": "no_match",
            "ontologist_default": "root",
        })


class MockProvider(ChatProvider):
    """Deterministic scripted chat backend (no clock, no randomness)"""

    def __init__(self, script: MockScript):
        self.script = script
        logger.info(
            f"Initialized mock provider: {len(script.responses)} responses, "
            f"{len(script.keyword_rules)} keyword rules, {len(script.matcher)} matcher entries, "
            f"{len(script.ontologist)} ontologist entries"
        )

    @property
    def name(self) -> str:
        return "mock"

    def chat(self, request: ChatRequest) -> ChatResponse:
        meta = {"model": "mock"}
        scripted = self.script.responses.get(request.user_message)
        if scripted is None:
            scripted = self.script.responses.get(prompt_hash(request))
        if scripted is not None:
            return ChatResponse(text=scripted, provider_meta={**meta, "rule": "response"})

        kind = prompt_kind(request.system_prompt)
        if kind == TOPIC_RETRIEVER and self.script.keyword_rules:
            return ChatResponse(text=self._retrieve(request.user_message), provider_meta={**meta, "rule": "keyword"})
        if kind == TOPIC_EXISTENCE:
            text = self._match(request.user_message)
            if text is not None:
                return ChatResponse(text=text, provider_meta={**meta, "rule": "matcher"})
        if kind == TOPIC_INSERTION:
            text = self._parent(request.user_message)
            if text is not None:
                return ChatResponse(text=text, provider_meta={**meta, "rule": "ontologist"})
        if kind == PRODUCT_CLASSIFIER:
            answer = "yes" if normalize_text(request.user_message) in self.script.product_names else "no"
            return ChatResponse(text=answer, provider_meta={**meta, "rule": "product"})

        raise UnscriptedPromptError(f"Unscripted prompt ({kind}): {request.user_message[:80]!r}")

    def _retrieve(self, paragraph: str) -> str:
        sentences = [s.strip() for s in _SENTENCE_SPLIT.split(paragraph) if s.strip()]
        found: Dict[str, List[str]] = {}
        for keyword, topic in self.script.keyword_rules:
            for sentence in sentences:
                if keyword in sentence.lower():
                    excerpts = found.setdefault(topic, [])
                    if sentence not in excerpts:
                        excerpts.append(sentence)
        drafts = [{"topic_name": topic, "excerpts": excerpts} for topic, excerpts in found.items()]
        return json.dumps(drafts, ensure_ascii=False)

    def _match(self, message: str) -> Optional[str]:
        found = _QUERY_TOPIC.search(message)
        if not found:
            return None
        query = found.group(1)
        matches = self.script.matcher.get(normalize_text(query))
        if matches is None:
            if self.script.matcher_default != "no_match":
                return None
            matches = ()
        payload = {
            "query_topic": query,
            "matches": [{"topic": t, "similarity": s} for t, s in matches],
            "detailed_analysis": {
                "matched_topics": [
                    {
                        "topic": t,
                        "similarity": s,
                        "reasoning": "scripted match",
                        "parent_subset_check": "scripted",
                    }
                    for t, s in matches
                ]
            },
        }
        return "<structured_output>\n" + json.dumps(payload, ensure_ascii=False, indent=4) + "\n</structured_output>"

    def _parent(self, message: str) -> Optional[str]:
        given = _GIVEN_TOPIC.search(message)
        if not given:
            return None
        path = self.script.ontologist.get(normalize_text(given.group(1)))
        if path is None:
            if self.script.ontologist_default != "root":
                return None
            path = ()

        offered = _offered_labels(message)
        # Answer with the deepest label of the scripted path this round offers;
        # a path with nothing offered is echoed so the caller sees an invalid label.
        parent: Optional[str] = None
        for label in path:
            if normalize_text(label) in offered:
                parent = label
        if parent is None and path:
            parent = path[-1]

        payload = {"reasoning": "scripted parent", "parent": parent}
        return "<structured_output>\n" + json.dumps(payload, ensure_ascii=False, indent=4) + "\n</structured_output>"


def _offered_labels(message: str) -> set:
    found = _TOPIC_TREE.search(message)
    if not found:
        return set()
    labels = set()
    for key, values in _parse_tree_literal(found.group(1)).items():
        labels.add(normalize_text(key))
        labels.update(normalize_text(v) for v in values)
    return labels


def _parse_tree_literal(text: str) -> Dict[str, List[str]]:
    try:
        tree = ast.literal_eval(text)
    except (ValueError, SyntaxError):
        return {}
    return tree if isinstance(tree, dict) else {}


def load_mock_script(path: Union[str, Path]) -> MockScript:
    try:
        data = json.loads(Path(path).read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as e:
        raise ConfigError(f"Cannot read mock script {path}: {e}") from e
    return MockScript.from_dict(data)


def mock_configure(script: Union[MockScript, Mapping[str, Any], None] = None) -> MockProvider:
    """Build a mock provider from a script object, a script dict, or the default rules"""
    if script is None:
        script = MockScript.default()
    elif not isinstance(script, MockScript):
        script = MockScript.from_dict(script)
    return MockProvider(script)


def chat_text(provider: ChatProvider, system_prompt: str, user_message: str, config: Optional[ProviderConfig] = None) -> str:
    """Convenience: one agent call with the configured decoding parameters"""
    config = config or ProviderConfig()
    request = ChatRequest(
        system_prompt=system_prompt,
        user_message=user_message,
        temperature=config.temperature,
        max_output_tokens=config.max_output_tokens,
    )
    return provider.chat(request).text

