"""
Structured logging for calltopics
Console output, rotating run logs and the pipeline decision trail
"""

import sys
from pathlib import Path
from typing import Optional

from loguru import logger

from config import LOG_LEVEL, LOGS_DIR

CONSOLE_FORMAT = (
    "<green>{time:HH:mm:ss}</green> | <level>{level: <8}</level> | "
    "<cyan>{name}</cyan>:<cyan>{function}</cyan> - <level>{message}</level>"
)

# Remove default handler
logger.remove()

_console_sink_id = logger.add(sys.stderr, format=CONSOLE_FORMAT, level=LOG_LEVEL)
_file_sinks_dir: Optional[Path] = None


def set_console_level(level: str) -> None:
    """Re-install the console sink at a new level"""
    global _console_sink_id
    logger.remove(_console_sink_id)
    _console_sink_id = logger.add(sys.stderr, format=CONSOLE_FORMAT, level=level.upper())


def add_file_sinks(logs_dir: Path = LOGS_DIR) -> None:
    """
    Add the run log, error log and decision trail under logs_dir.
    Called once by the CLI; library use and tests stay console-only.
    """
    global _file_sinks_dir
    if _file_sinks_dir is not None:
        return
    logs_dir = Path(logs_dir)
    logs_dir.mkdir(parents=True, exist_ok=True)

    # File handler for all logs
    logger.add(
        logs_dir / "calltopics_{time:YYYY-MM-DD}.log",
        rotation="00:00",
        retention="30 days",
        compression="zip",
        format="{time:YYYY-MM-DD HH:mm:ss} | {level: <8} | {name}:{function}:{line} - {message}",
        level="DEBUG",
    )

    # Decision trail: one line per topic decision or skipped paragraph
    logger.add(
        logs_dir / "pipeline_trail_{time:YYYY-MM-DD}.log",
        rotation="00:00",
        retention="90 days",
        filter=lambda record: "trail" in record["extra"],
        format="{time:YYYY-MM-DD HH:mm:ss} | {extra[event]} | {message}",
        level="INFO",
    )

    # Error handler
    logger.add(
        logs_dir / "errors_{time:YYYY-MM-DD}.log",
        rotation="00:00",
        retention="90 days",
        level="ERROR",
        backtrace=True,
        diagnose=True,
    )
    _file_sinks_dir = logs_dir


def log_topic_decision(query: str, outcome: str, topic_id: str) -> None:
    """Log how a retrieved topic was resolved (exact / alias / inserted)"""
    logger.bind(trail=True, event="topic").info(f"{outcome} | {query[:80]} | {topic_id}")


def log_skipped_paragraph(para_id: str, reason: str) -> None:
    logger.bind(trail=True, event="skip").warning(f"{para_id} | {reason[:200]}")


def log_provider_call(kind: str, attempt: int, status: str) -> None:
    logger.debug(f"Provider {kind} attempt {attempt}: {status}")
