"""Tests for logging setup and runtime paths."""
import logging

import pytest

from logging_setup import LOG_FILE, LOG_FORMAT, _RunContextFilter, configure_logging, run_context
from runtime_paths import get_run_dir, get_runtime_log_dir, get_runtime_output_dir


@pytest.fixture
def bare_root():
    """Root logger without handlers for the duration of a test."""
    root = logging.getLogger()
    saved_handlers, saved_level = root.handlers[:], root.level
    root.handlers = []
    yield root
    for handler in _own_handlers(root):
        handler.close()
    root.handlers = saved_handlers
    root.setLevel(saved_level)


def _own_handlers(root):
    """Handlers installed by configure_logging; pytest adds its own capture handlers to root."""
    return [h for h in root.handlers if getattr(h, "_defusion", False)]


def _record(**extra):
    record = logging.LogRecord("defusion.test", logging.INFO, __file__, 1, "hello", None, None)
    for key, value in extra.items():
        setattr(record, key, value)
    return record


def test_run_context_payload():
    """Fold defaults to '-' outside fold jobs."""
    assert run_context("abc") == {"run_id": "abc", "fold": "-"}
    assert run_context("abc", 0) == {"run_id": "abc", "fold": 0}


def test_filter_fills_missing_context():
    """Records logged without extra= still format."""
    record = _record()
    assert _RunContextFilter().filter(record)
    line = logging.Formatter(LOG_FORMAT).format(record)
    assert "[run=- fold=-] hello" in line


def test_filter_keeps_given_context():
    """Run id and fold from extra= appear in the line."""
    record = _record(run_id="r1", fold=3)
    _RunContextFilter().filter(record)
    assert "[run=r1 fold=3]" in logging.Formatter(LOG_FORMAT).format(record)


def test_configure_logging_writes_file(bare_root, tmp_path):
    """Handlers go to stderr and the log directory, installed only once."""
    configure_logging("DEBUG", log_dir=tmp_path)
    assert bare_root.level == logging.DEBUG
    assert len(_own_handlers(bare_root)) == 2
    logging.getLogger("defusion.test").info("written", extra=run_context("r2", 1))
    for handler in _own_handlers(bare_root):
        handler.flush()
    assert "[run=r2 fold=1] written" in (tmp_path / LOG_FILE).read_text()

    configure_logging("WARNING", log_dir=tmp_path)
    assert len(_own_handlers(bare_root)) == 2
    assert bare_root.level == logging.WARNING


def test_log_level_from_environment(bare_root, tmp_path, monkeypatch):
    """DEFUSION_LOG_LEVEL applies when no level is passed."""
    monkeypatch.setenv("DEFUSION_LOG_LEVEL", "error")
    configure_logging(log_dir=tmp_path)
    assert bare_root.level == logging.ERROR


def test_runtime_dirs_follow_environment(tmp_path, monkeypatch):
    """Output and log dirs live under DEFUSION_RUNTIME_HOME unless overridden."""
    monkeypatch.setenv("DEFUSION_RUNTIME_HOME", str(tmp_path / "home"))
    monkeypatch.delenv("DEFUSION_OUTPUT_DIR", raising=False)
    monkeypatch.setenv("DEFUSION_LOG_DIR", str(tmp_path / "logs"))
    assert get_runtime_output_dir() == tmp_path / "home" / "runs"
    assert get_runtime_log_dir() == tmp_path / "logs"
    run_dir = get_run_dir("cross-validate", "abc123")
    assert run_dir == tmp_path / "home" / "runs" / "cross-validate-abc123"
    assert run_dir.is_dir()
