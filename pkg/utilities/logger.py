# utilities/logger.py
# Logging setup for the command surface; reports go to stdout, log records to stderr and the log file

import logging
import logging.handlers
from pathlib import Path
from typing import Optional

from config.settings import LoggingConfig


def _rotating_file_handler(log_file: str) -> logging.Handler:
    Path(log_file).parent.mkdir(parents=True, exist_ok=True)
    handler = logging.handlers.RotatingFileHandler(
        log_file,
        maxBytes=LoggingConfig.MAX_LOG_SIZE,
        backupCount=LoggingConfig.BACKUP_COUNT
    )
    handler.setLevel(logging.DEBUG)
    handler.setFormatter(logging.Formatter(LoggingConfig.LOG_FORMAT))
    return handler


def _stderr_handler(level: int) -> logging.Handler:
    handler = logging.StreamHandler()
    handler.setLevel(level)
    handler.setFormatter(logging.Formatter('%(levelname)s - %(name)s - %(message)s'))
    return handler


def setup_logging(log_file: Optional[str] = LoggingConfig.LOG_FILE, level: str = LoggingConfig.LOG_LEVEL,
                  quiet: bool = False):
    """
    Configure the root logger once per run

    Args:
        log_file: Rotating log file path, or None to log to stderr only
        level: stderr log level name
        quiet: Only warnings and errors reach stderr
    """
    root = logging.getLogger()
    root.setLevel(logging.DEBUG)
    for handler in root.handlers[:]:
        root.removeHandler(handler)

    stderr_level = logging.WARNING if quiet else getattr(logging, level.upper(), logging.INFO)
    root.addHandler(_stderr_handler(stderr_level))
    if log_file:
        try:
            root.addHandler(_rotating_file_handler(log_file))
        except OSError as e:
            logging.getLogger(__name__).warning(f"Cannot open log file {log_file}: {e}; logging to stderr only")

    # numpy RuntimeWarnings (overflow while sampling a metric) end up in the log instead of raw stderr
    logging.captureWarnings(True)
    logging.getLogger(__name__).debug(f"Logging initialized (stderr level {logging.getLevelName(stderr_level)})")


def get_logger(name: str) -> logging.Logger:
    """
    Get a logger instance for the specified module

    Args:
        name: Usually __name__ from the calling module

    Returns:
        Configured logger instance
    """
    return logging.getLogger(name)
