from __future__ import annotations

import logging
from typing import IO, Optional, Union

LOGGER_NAME = "metameta"
LOG_FORMAT = "%(asctime)s %(levelname)s [%(name)s] %(message)s"


def get_logger(name: Optional[str] = None) -> logging.Logger:
    """
    The package logger, or one of its children.

    Modules pass `__name__`; bare names are nested under the package logger, so
    `get_logger("kmeans")` and `get_logger("metameta.kmeans")` are the same logger.
    """
    if not name or name == LOGGER_NAME:
        return logging.getLogger(LOGGER_NAME)
    if not name.startswith(LOGGER_NAME + "."):
        name = f"{LOGGER_NAME}.{name}"
    return logging.getLogger(name)


def configure_logging(
    level: Union[int, str] = logging.INFO, stream: Optional[IO[str]] = None
) -> logging.Logger:
    """Attach one stream handler to the package logger; later calls only change the level."""
    if isinstance(level, str):
        resolved = logging.getLevelName(level.upper())
        if not isinstance(resolved, int):
            raise ValueError(f"unknown log level {level!r}")
        level = resolved

    logger = get_logger()
    logger.setLevel(level)
    if not any(getattr(h, "_metameta", False) for h in logger.handlers):
        handler = logging.StreamHandler(stream)
        handler.setFormatter(logging.Formatter(LOG_FORMAT))
        handler._metameta = True  # type: ignore[attr-defined]
        logger.addHandler(handler)
    return logger
