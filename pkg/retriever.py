"""
Topic retriever agent for calltopics
One chat call per paragraph: extract topics and their excerpts as JSON
"""

import json
import re
from dataclasses import dataclass
from typing import List, Optional, Sequence, Tuple

from loguru import logger
from pydantic import TypeAdapter, ValidationError

from config import ProviderConfig
from corpus import Paragraph
from errors import ParameterError, ResponseParseError
from prompts import TOPIC_RETRIEVER, load_prompt
from providers import ChatProvider, chat_text
from schemas import RetrieverItem

_FENCE = re.compile(r"^\s*```[A-Za-z0-9_-]*[ \t]*\n?(.*?)\n?```\s*$", re.DOTALL)
_ITEMS = TypeAdapter(List[RetrieverItem])


@dataclass(frozen=True)
class TopicMentionDraft:
    topic_name: str
    excerpts: Tuple[str, ...]

    def __post_init__(self):
        if not self.topic_name.strip():
            raise ValueError("topic_name must be non-empty")
        if not self.excerpts:
            raise ValueError(f"draft {self.topic_name!r} has no excerpts")
        if any(not e.strip() for e in self.excerpts):
            raise ValueError("excerpts must be non-empty strings")


@dataclass(frozen=True)
class RetrievalResult:
    para_id: str
    drafts: Tuple[TopicMentionDraft, ...] = ()
    skipped_reason: Optional[str] = None

    @property
    def skipped(self) -> bool:
        return self.skipped_reason is not None


def render_retriever_prompt() -> str:
    """The retriever system prompt, byte-for-byte as shipped"""
    return load_prompt(TOPIC_RETRIEVER)


def strip_code_fences(text: str) -> str:
    match = _FENCE.match(text)
    return match.group(1) if match else text.strip()


def parse_retriever_response(text: str) -> List[TopicMentionDraft]:
    """
    Parse the retriever's JSON reply

    Args:
        text: Raw provider reply; a surrounding code fence is tolerated

    Returns:
        Drafts in reply order; blank names and excerpts dropped, exact
        duplicate names merged, topics left without an excerpt dropped

    Raises:
        ResponseParseError: not JSON, or not a list of {topic_name, excerpts}
    """
    try:
        items = _ITEMS.validate_python(json.loads(strip_code_fences(text)))
    except (json.JSONDecodeError, ValidationError) as e:
        raise ResponseParseError(f"Retriever reply is not a JSON topic list: {str(e).splitlines()[0]}", raw_text=text) from e

    merged = {}
    for item in items:
        name = item.topic_name.strip()
        if not name:
            continue
        excerpts = [e.strip() for e in item.excerpts if e.strip()]
        merged.setdefault(name, []).extend(excerpts)

    for name in [n for n, excerpts in merged.items() if not excerpts]:
        logger.debug(f"Dropping topic {name!r}: no usable excerpt")
        del merged[name]
    return [TopicMentionDraft(name, tuple(excerpts)) for name, excerpts in merged.items()]


def serialize_drafts(drafts: Sequence[TopicMentionDraft]) -> str:
    """Drafts in the retriever's reply format"""
    return json.dumps(
        [{"topic_name": d.topic_name, "excerpts": list(d.excerpts)} for d in drafts],
        ensure_ascii=False,
    )


def retrieve_topics(
    paragraph: Paragraph,
    provider: ChatProvider,
    config: Optional[ProviderConfig] = None,
    retry_malformed: bool = True,
) -> RetrievalResult:
    """
    Extract topics from one paragraph

    A malformed reply is retried once with the same prompt; a second
    failure skips the paragraph. Provider errors propagate.
    """
    if not paragraph.text.strip():
        raise ParameterError(f"Paragraph {paragraph.para_id} is empty")

    system_prompt = render_retriever_prompt()
    attempts = 2 if retry_malformed else 1
    last_error: Optional[ResponseParseError] = None

    for attempt in range(1, attempts + 1):
        reply = chat_text(provider, system_prompt, paragraph.text, config)
        try:
            drafts = parse_retriever_response(reply)
        except ResponseParseError as e:
            last_error = e
            logger.warning(f"Malformed retriever reply for {paragraph.para_id} (attempt {attempt}/{attempts}): {e}")
            continue
        return RetrievalResult(paragraph.para_id, tuple(drafts))

    return RetrievalResult(paragraph.para_id, (), skipped_reason=f"malformed retriever reply: {last_error}")

