"""Process-wide logging: stderr plus a rotating file in the runtime log dir."""
from __future__ import annotations

import logging
import os
from logging.handlers import RotatingFileHandler
from pathlib import Path
from typing import Optional

from runtime_paths import get_runtime_log_dir

LOG_FORMAT = "%(asctime)s %(levelname)s %(name)s [run=%(run_id)s fold=%(fold)s] %(message)s"
LOG_FILE = "defusion.log"


class _RunContextFilter(logging.Filter):
    def filter(self, record: logging.LogRecord) -> bool:
        if not hasattr(record, "run_id"):
            record.run_id = "-"
        if not hasattr(record, "fold"):
            record.fold = "-"
        return True


def run_context(run_id: str, fold: Optional[int] = None) -> dict:
    """``extra=`` payload for log calls inside a run."""
    return {"run_id": run_id, "fold": "-" if fold is None else fold}


def configure_logging(level: Optional[str] = None, log_dir: Optional[Path] = None) -> logging.Logger:
    """Install handlers on the root logger once; later calls only adjust the level."""
    root = logging.getLogger()
    level_name = (level or os.environ.get("DEFUSION_LOG_LEVEL", "INFO")).upper()
    root.setLevel(getattr(logging, level_name, logging.INFO))
    if any(getattr(h, "_defusion", False) for h in root.handlers):
        return root

    formatter = logging.Formatter(LOG_FORMAT)
    context_filter = _RunContextFilter()
    stream_handler = logging.StreamHandler()
    stream_handler.setFormatter(formatter)
    stream_handler.addFilter(context_filter)
    stream_handler._defusion = True
    root.addHandler(stream_handler)

    try:
        directory = Path(log_dir) if log_dir is not None else get_runtime_log_dir()
        directory.mkdir(parents=True, exist_ok=True)
        file_handler = RotatingFileHandler(
            directory / LOG_FILE,
            maxBytes=2 * 1024 * 1024,
            backupCount=3,
            encoding="utf-8",
        )
    except OSError:
        root.warning("File logging disabled: log directory is not writable", extra=run_context("-"))
        return root
    file_handler.setFormatter(formatter)
    file_handler.addFilter(context_filter)
    file_handler._defusion = True
    root.addHandler(file_handler)
    return root
