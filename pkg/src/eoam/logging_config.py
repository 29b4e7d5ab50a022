"""JSON-lines logging for the eoam command.

structlog renders through the stdlib ``logging`` tree, so events from eoam
and from libraries (aiosqlite, concurrent.futures) land in the same
``<log_dir>/eoam.jsonl`` file and on stderr with one format.
"""

from __future__ import annotations

import logging
from logging.handlers import TimedRotatingFileHandler
from pathlib import Path

import structlog
from structlog.typing import Processor

LOG_FILE = "eoam.jsonl"

_QUIET_LIBRARIES = ("aiosqlite", "asyncio")
_OWNED = "_eoam_handler"


def _pre_chain() -> list[Processor]:
    # Shared by structlog events and foreign stdlib records
    return [
        structlog.contextvars.merge_contextvars,
        structlog.processors.add_log_level,
        structlog.processors.TimeStamper(fmt="iso", utc=True),
    ]


def _json_formatter() -> logging.Formatter:
    return structlog.stdlib.ProcessorFormatter(
        foreign_pre_chain=_pre_chain(),
        processors=[
            structlog.stdlib.ProcessorFormatter.remove_processors_meta,
            structlog.processors.JSONRenderer(sort_keys=False),
        ],
    )


def _build_handlers(log_path: Path, level: int) -> list[logging.Handler]:
    file_handler = TimedRotatingFileHandler(log_path, when="midnight", backupCount=14, utc=True)
    handlers: list[logging.Handler] = [file_handler, logging.StreamHandler()]
    formatter = _json_formatter()
    for handler in handlers:
        handler.setLevel(level)
        handler.setFormatter(formatter)
        setattr(handler, _OWNED, True)
    return handlers


def _swap_root_handlers(root: logging.Logger, handlers: list[logging.Handler]) -> None:
    """Replace handlers installed by an earlier call, leave foreign ones alone."""
    for old in [h for h in root.handlers if getattr(h, _OWNED, False)]:
        root.removeHandler(old)
        old.close()
    for handler in handlers:
        root.addHandler(handler)


def setup_logging(log_dir: str = "logs", log_level: str = "INFO") -> Path:
    """Route structlog and stdlib logging to ``<log_dir>/eoam.jsonl`` plus stderr.

    Safe to call more than once in a process; the previous file handler is
    closed. Returns the log file path.
    """
    level = logging.getLevelName(log_level.upper())
    if not isinstance(level, int):
        raise ValueError(f"unknown log level {log_level!r}")

    directory = Path(log_dir)
    directory.mkdir(parents=True, exist_ok=True)
    log_path = directory / LOG_FILE

    root = logging.getLogger()
    root.setLevel(level)
    _swap_root_handlers(root, _build_handlers(log_path, level))
    for name in _QUIET_LIBRARIES:
        logging.getLogger(name).setLevel(max(level, logging.WARNING))

    structlog.configure(
        processors=[
            *_pre_chain(),
            structlog.processors.StackInfoRenderer(),
            structlog.processors.format_exc_info,
            structlog.stdlib.ProcessorFormatter.wrap_for_formatter,
        ],
        wrapper_class=structlog.make_filtering_bound_logger(level),
        logger_factory=structlog.stdlib.LoggerFactory(),
        context_class=dict,
        cache_logger_on_first_use=False,
    )
    return log_path
