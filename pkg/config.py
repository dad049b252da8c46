"""
Configuration management for calltopics
Loads environment variables and run-config files, provides typed settings
"""

import json
import math
import os
try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path
from typing import Any, Dict, Mapping, Optional

from dotenv import load_dotenv

from errors import ConfigError

# Load environment variables
load_dotenv()

# Remote provider defaults (OpenAI-compatible endpoint)
ENDPOINT_URL = os.getenv("CALLTOPICS_ENDPOINT_URL", "https://api.openai.com/v1")
CHAT_MODEL = os.getenv("CALLTOPICS_CHAT_MODEL", "gpt-4o-mini")
EMBEDDING_MODEL = os.getenv("CALLTOPICS_EMBEDDING_MODEL", "text-embedding-3-small")
API_KEY_ENV_VAR = os.getenv("CALLTOPICS_API_KEY_ENV", "OPENAI_API_KEY")
PROVIDER_TIMEOUT = float(os.getenv("CALLTOPICS_TIMEOUT", "30"))
PROVIDER_MAX_RETRIES = int(os.getenv("CALLTOPICS_MAX_RETRIES", "2"))
PROVIDER_RETRY_BACKOFF = float(os.getenv("CALLTOPICS_RETRY_BACKOFF", "1.0"))

# Agent decoding (deterministic by default)
LLM_TEMPERATURE = 0.0
LLM_MAX_OUTPUT_TOKENS = 1024

# Mock embedding buckets
MOCK_EMBEDDING_DIMENSION = 256

# Ontologist defaults
MATCH_THRESHOLD = 85
CANDIDATE_K = 25
MAX_IN_FLIGHT = 4
MAX_DEPTH = 4

# Analytics defaults
TREND_ALPHA = 0.05
TREND_MIN_QUARTERS = 6
TOP_N_TOPICS = 100
LOESS_SPAN = 0.5
LOESS_DEGREE = 1
MIN_LATE_MENTIONS = 5
COHERENCE_PARENTS = 10

# Logging
LOG_LEVEL = os.getenv("CALLTOPICS_LOG_LEVEL", "INFO")

# System Paths
BASE_DIR = Path(__file__).parent
PROMPTS_DIR = BASE_DIR / "prompt_assets"
LOGS_DIR = Path(os.getenv("CALLTOPICS_LOGS_DIR", str(BASE_DIR / "logs")))


@dataclass(frozen=True)
class ProviderConfig:
    """Which backend answers chat/embedding calls and how to reach it"""

    kind: str = "mock"
    endpoint_url: str = ENDPOINT_URL
    model_name: str = CHAT_MODEL
    embedding_model: str = EMBEDDING_MODEL
    api_key_env_var: str = API_KEY_ENV_VAR
    timeout: float = PROVIDER_TIMEOUT
    max_retries: int = PROVIDER_MAX_RETRIES
    retry_backoff: float = PROVIDER_RETRY_BACKOFF
    temperature: float = LLM_TEMPERATURE
    max_output_tokens: int = LLM_MAX_OUTPUT_TOKENS
    embedding_dimension: int = MOCK_EMBEDDING_DIMENSION
    mock_script: Optional[str] = None

    def __post_init__(self):
        if self.kind not in ("mock", "http"):
            raise ConfigError(f"provider.kind must be 'mock' or 'http', got {self.kind!r}")
        if self.max_retries < 0:
            raise ConfigError("provider.max_retries must be >= 0")
        if not self.timeout > 0:
            raise ConfigError("provider.timeout must be > 0")
        if self.retry_backoff < 0:
            raise ConfigError("provider.retry_backoff must be >= 0")
        if not (math.isfinite(self.temperature) and 0 <= self.temperature <= 2):
            raise ConfigError("provider.temperature must be in [0, 2]")
        if self.max_output_tokens < 1:
            raise ConfigError("provider.max_output_tokens must be positive")
        if self.embedding_dimension < 1:
            raise ConfigError("provider.embedding_dimension must be positive")

    def api_key(self) -> Optional[str]:
        """Secrets only ever come from the environment"""
        return os.getenv(self.api_key_env_var)


@dataclass(frozen=True)
class PipelineConfig:
    """Knobs of the ontologist agent and the enrichment run"""

    match_threshold: int = MATCH_THRESHOLD
    candidate_k: int = CANDIDATE_K
    max_in_flight: int = MAX_IN_FLIGHT
    max_depth: int = MAX_DEPTH
    retry_malformed_json: bool = True
    skip_failed_paragraphs: bool = True

    def __post_init__(self):
        if not 0 <= self.match_threshold <= 100:
            raise ConfigError("pipeline.match_threshold must be in [0, 100]")
        if self.candidate_k < 1:
            raise ConfigError("pipeline.candidate_k must be >= 1")
        if self.max_in_flight < 1:
            raise ConfigError("pipeline.max_in_flight must be >= 1")
        if self.max_depth < 1:
            raise ConfigError("pipeline.max_depth must be >= 1")


@dataclass(frozen=True)
class AnalyticsConfig:
    alpha: float = TREND_ALPHA
    min_quarters: int = TREND_MIN_QUARTERS
    top_n: int = TOP_N_TOPICS
    span: float = LOESS_SPAN
    degree: int = LOESS_DEGREE
    min_late_mentions: int = MIN_LATE_MENTIONS
    coherence_parents: int = COHERENCE_PARENTS
    product_list: Optional[str] = None
    classify_products: bool = False
    count_mode: str = "mention"
    rollup: bool = False

    def __post_init__(self):
        if not 0 < self.alpha < 1:
            raise ConfigError("analytics.alpha must be in (0, 1)")
        if self.top_n < 1:
            raise ConfigError("analytics.top_n must be >= 1")
        if not 0 < self.span <= 1:
            raise ConfigError("analytics.span must be in (0, 1]")
        if self.degree not in (0, 1):
            raise ConfigError("analytics.degree must be 0 or 1")
        if self.min_late_mentions < 1:
            raise ConfigError("analytics.min_late_mentions must be >= 1")
        if self.min_quarters < 3:
            raise ConfigError("analytics.min_quarters must be >= 3")
        if self.coherence_parents < 1:
            raise ConfigError("analytics.coherence_parents must be >= 1")
        if self.count_mode not in ("mention", "paragraph"):
            raise ConfigError("analytics.count_mode must be 'mention' or 'paragraph'")


@dataclass(frozen=True)
class IOConfig:
    corpus: Optional[str] = None
    ontology: Optional[str] = None
    enrichments: Optional[str] = None
    seed_spec: Optional[str] = None
    out_dir: str = "out"


@dataclass(frozen=True)
class RunConfig:
    provider: ProviderConfig = field(default_factory=ProviderConfig)
    pipeline: PipelineConfig = field(default_factory=PipelineConfig)
    analytics: AnalyticsConfig = field(default_factory=AnalyticsConfig)
    io: IOConfig = field(default_factory=IOConfig)

    @classmethod
    def from_dict(cls, data: Mapping[str, Any]) -> "RunConfig":
        unknown = set(data) - {f.name for f in fields(cls)}
        if unknown:
            raise ConfigError(f"Unknown config sections: {sorted(unknown)}")
        return cls(
            provider=_build_section(ProviderConfig, data.get("provider", {}), "provider"),
            pipeline=_build_section(PipelineConfig, data.get("pipeline", {}), "pipeline"),
            analytics=_build_section(AnalyticsConfig, data.get("analytics", {}), "analytics"),
            io=_build_section(IOConfig, data.get("io", {}), "io"),
        )

    def to_dict(self) -> Dict[str, Any]:
        return asdict(self)


def _build_section(cls, data: Any, name: str):
    if not isinstance(data, Mapping):
        raise ConfigError(f"Config section '{name}' must be a table/object")
    allowed = {f.name for f in fields(cls)}
    unknown = set(data) - allowed
    if unknown:
        raise ConfigError(f"Unknown keys in '{name}': {sorted(unknown)}")
    try:
        return cls(**data)
    except TypeError as e:
        raise ConfigError(f"Invalid '{name}' section: {e}") from e


def load_run_config(path: Optional[str] = None) -> RunConfig:
    """
    Load a run config from a JSON or TOML file

    Args:
        path: Config file; None gives the defaults

    Returns:
        Validated RunConfig
    """
    if path is None:
        return RunConfig()

    config_path = Path(path)
    if not config_path.is_file():
        raise ConfigError(f"Config file not found: {config_path}")

    text = config_path.read_text(encoding="utf-8")
    try:
        if config_path.suffix.lower() == ".toml":
            data = tomllib.loads(text)
        else:
            data = json.loads(text)
    except (tomllib.TOMLDecodeError, json.JSONDecodeError) as e:
        raise ConfigError(f"Cannot parse config {config_path}: {e}") from e

    if not isinstance(data, dict):
        raise ConfigError("Config root must be an object")
    return RunConfig.from_dict(data)


def validate_config(run_config: RunConfig) -> None:
    """Validate what a provider-backed command needs before it starts"""
    errors = []
    provider = run_config.provider

    if provider.kind == "http" and not provider.api_key():
        errors.append(f"{provider.api_key_env_var} not set in environment")

    if provider.kind == "mock" and provider.mock_script and not Path(provider.mock_script).is_file():
        errors.append(f"mock script not found: {provider.mock_script}")

    if errors:
        raise ConfigError(f"Configuration errors: {', '.join(errors)}")
