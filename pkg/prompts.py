"""
Prompt assets for the topic agents
The texts live in prompt_assets/ and are pinned byte-for-byte by golden tests
"""

from functools import lru_cache

from config import PROMPTS_DIR

TOPIC_RETRIEVER = "topic_retriever.txt"
TOPIC_EXISTENCE = "topic_existence.txt"
TOPIC_INSERTION = "topic_insertion.txt"
PRODUCT_CLASSIFIER = "product_classifier.txt"

ALL_PROMPTS = (TOPIC_RETRIEVER, TOPIC_EXISTENCE, TOPIC_INSERTION, PRODUCT_CLASSIFIER)


@lru_cache(maxsize=None)
def load_prompt(name: str) -> str:
    if name not in ALL_PROMPTS:
        raise KeyError(f"Unknown prompt asset: {name}")
    return (PROMPTS_DIR / name).read_bytes().decode("utf-8")


def prompt_kind(system_prompt: str) -> str:
    """Identify which shipped prompt a system message is (or 'other')"""
    for name in ALL_PROMPTS:
        if system_prompt == load_prompt(name):
            return name
    return "other"
