"""
Embedding generation for calltopics
Turns topic labels into vectors for shortlisting and coherence checks.
The hashed bag-of-words encoder is the offline/mock backend.
"""

import math
import time
from abc import ABC, abstractmethod
from dataclasses import dataclass
from typing import Callable, List, Optional, Sequence, Tuple

import httpx
import numpy as np
from loguru import logger
from sklearn.feature_extraction.text import HashingVectorizer

from config import MOCK_EMBEDDING_DIMENSION, ProviderConfig
from corpus import tokenize
from errors import ParameterError, ProviderError
from providers import make_http_client, post_json


@dataclass(frozen=True)
class EmbeddingVector:
    values: Tuple[float, ...]

    def __post_init__(self):
        if not self.values:
            raise ValueError("EmbeddingVector must have a positive dimension")
        if not all(math.isfinite(v) for v in self.values):
            raise ValueError("EmbeddingVector components must be finite")

    @property
    def dimension(self) -> int:
        return len(self.values)

    def as_array(self) -> np.ndarray:
        return np.asarray(self.values, dtype=float)


class EmbeddingEncoder(ABC):
    """Handles text-to-vector conversion; one vector per input, order kept"""

    @property
    @abstractmethod
    def dimension(self) -> Optional[int]:
        pass

    @abstractmethod
    def _encode(self, texts: List[str]) -> np.ndarray:
        pass

    def embed(self, texts: Sequence[str]) -> List[EmbeddingVector]:
        """
        Convert texts to embedding vectors

        Args:
            texts: Non-empty strings

        Returns:
            One vector per text, same order, constant dimension
        """
        texts = list(texts)
        if not texts:
            return []
        if any(not isinstance(t, str) or not t.strip() for t in texts):
            raise ParameterError("embed() needs non-empty strings")
        matrix = self._encode(texts)
        return [EmbeddingVector(tuple(float(v) for v in row)) for row in matrix]

    def embed_matrix(self, texts: Sequence[str]) -> np.ndarray:
        """embed() as an (n, dimension) array"""
        vectors = self.embed(texts)
        if not vectors:
            return np.zeros((0, self.dimension or 0))
        return np.vstack([v.as_array() for v in vectors])


class HashedBagEncoder(EmbeddingEncoder):
    """
    Deterministic mock embedding: tokenize like the corpus, hash each token
    (MurmurHash3 via scikit-learn) into one of `dimension` buckets, count,
    L2-normalize. Shared tokens give positive cosine similarity.
    """

    def __init__(self, dimension: int = MOCK_EMBEDDING_DIMENSION):
        if dimension < 1:
            raise ParameterError("dimension must be positive")
        self._dimension = dimension
        self.vectorizer = HashingVectorizer(
            n_features=dimension,
            tokenizer=tokenize,
            token_pattern=None,
            lowercase=False,
            alternate_sign=False,
            norm="l2",
        )
        logger.info(f"Hashed bag-of-words encoder initialized with {dimension} buckets")

    @property
    def dimension(self) -> int:
        return self._dimension

    def _encode(self, texts: List[str]) -> np.ndarray:
        return self.vectorizer.transform(texts).toarray()


class HttpEmbeddingEncoder(EmbeddingEncoder):
    """OpenAI-compatible /embeddings client"""

    def __init__(self, config: ProviderConfig, client: Optional[httpx.Client] = None, sleep: Callable[[float], None] = time.sleep):
        self.config = config
        self.client = client or make_http_client(config)
        self._sleep = sleep
        self._url = config.endpoint_url.rstrip("/") + "/embeddings"
        self._dimension: Optional[int] = None

    @property
    def dimension(self) -> Optional[int]:
        return self._dimension

    def _encode(self, texts: List[str]) -> np.ndarray:
        payload = {"model": self.config.embedding_model, "input": texts}
        data = post_json(self.client, self._url, payload, self.config, "embeddings", sleep=self._sleep)
        try:
            rows = sorted(data["data"], key=lambda item: item["index"])
            matrix = np.asarray([row["embedding"] for row in rows], dtype=float)
        except (KeyError, TypeError, ValueError) as e:
            raise ProviderError(f"embeddings response malformed: {e}") from e

        if matrix.ndim != 2 or matrix.shape[0] != len(texts):
            raise ProviderError(f"embeddings response has {matrix.shape[0] if matrix.ndim else 0} vectors for {len(texts)} inputs")
        if not np.isfinite(matrix).all():
            raise ProviderError("embeddings response has non-finite components")
        if self._dimension is None:
            self._dimension = int(matrix.shape[1])
        elif matrix.shape[1] != self._dimension:
            raise ProviderError(f"embedding dimension changed from {self._dimension} to {matrix.shape[1]}")
        return matrix


def cosine_similarity(a, b) -> float:
    """
    Cosine similarity between two vectors
    Returns value between -1 and 1; 0 when either vector is all zeros
    """
    va = a.as_array() if isinstance(a, EmbeddingVector) else np.asarray(a, dtype=float)
    vb = b.as_array() if isinstance(b, EmbeddingVector) else np.asarray(b, dtype=float)
    denom = np.linalg.norm(va) * np.linalg.norm(vb)
    if denom == 0:
        return 0.0
    return float(np.clip(np.dot(va, vb) / denom, -1.0, 1.0))


def cosine_to_rows(query: np.ndarray, matrix: np.ndarray) -> np.ndarray:
    """Cosine of one query vector against every row of matrix"""
    if matrix.shape[0] == 0:
        return np.zeros(0)
    norms = np.linalg.norm(matrix, axis=1) * np.linalg.norm(query)
    dots = matrix @ query
    with np.errstate(divide="ignore", invalid="ignore"):
        sims = np.where(norms > 0, dots / norms, 0.0)
    return np.clip(sims, -1.0, 1.0)
