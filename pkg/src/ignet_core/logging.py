"""
Logging configuration for the ignet pipeline
"""

import json
import logging
import os
from datetime import datetime, timezone
from typing import Optional

STRUCTURED_FIELDS = ("stage", "step", "seed", "frame", "term", "loss")


class JSONFormatter(logging.Formatter):
    """JSON formatter carrying the training context fields of a record"""

    def format(self, record):
        log_entry = {
            "timestamp": datetime.now(timezone.utc).isoformat(),
            "level": record.levelname,
            "message": record.getMessage(),
            "module": record.module,
            "function": record.funcName,
            "line": record.lineno,
        }
        for field in STRUCTURED_FIELDS:
            if hasattr(record, field):
                log_entry[field] = getattr(record, field)
        if record.exc_info:
            log_entry["exception"] = self.formatException(record.exc_info)
        return json.dumps(log_entry, default=str)


def _owned(handler: logging.Handler) -> bool:
    return getattr(handler, "_ignet_pipeline", False)


def setup_logging(log_level: str = "INFO", log_file: Optional[str] = "logs/ignet.log"):
    """Console logging plus an optional JSON-lines file.

    Calling it again replaces the handlers installed by the previous call.
    """
    logger = logging.getLogger()
    logger.setLevel(getattr(logging, log_level.upper()))
    for handler in [h for h in logger.handlers if _owned(h)]:
        logger.removeHandler(handler)
        handler.close()

    log_dir = os.path.dirname(log_file) if log_file else ""
    if log_dir and not os.path.exists(log_dir):
        try:
            os.makedirs(log_dir, exist_ok=True)
        except (OSError, PermissionError):
            # Console-only logging then
            pass

    handlers = []
    if log_file:
        try:
            file_handler = logging.FileHandler(log_file)
            file_handler.setFormatter(JSONFormatter())
            handlers.append(file_handler)
        except (OSError, PermissionError):
            pass

    console_handler = logging.StreamHandler()
    console_handler.setFormatter(
        logging.Formatter("%(asctime)s - %(levelname)s - %(name)s - %(message)s")
    )
    handlers.append(console_handler)
    for handler in handlers:
        handler._ignet_pipeline = True
        logger.addHandler(handler)

    return logger
