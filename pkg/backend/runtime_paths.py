"""Writable locations for runs, logs and generated cohorts.

Each directory can be redirected with an environment variable; when the
preferred location cannot be created a ``/tmp`` fallback is used instead.
"""
from __future__ import annotations

import os
from pathlib import Path
from typing import Optional

HOME_ENV = "DEFUSION_RUNTIME_HOME"
TMP_ROOT = Path("/tmp")


def _from_env(variable: str) -> Optional[Path]:
    value = os.environ.get(variable, "").strip()
    return Path(value).expanduser() if value else None


def _make_dir(preferred: Path, fallback: Path) -> Path:
    for candidate in (preferred, fallback):
        try:
            candidate.mkdir(parents=True, exist_ok=True)
        except OSError:
            if candidate is fallback:
                raise
            continue
        return candidate
    return fallback


def get_runtime_home() -> Path:
    return _make_dir(_from_env(HOME_ENV) or Path.home() / "DeFusion", TMP_ROOT / "defusion")


def _runtime_subdir(variable: str, name: str) -> Path:
    preferred = _from_env(variable) or get_runtime_home() / name
    return _make_dir(preferred, TMP_ROOT / f"defusion-{name}")


def get_runtime_output_dir() -> Path:
    return _runtime_subdir("DEFUSION_OUTPUT_DIR", "runs")


def get_runtime_log_dir() -> Path:
    return _runtime_subdir("DEFUSION_LOG_DIR", "logs")


def get_run_dir(command: str, config_digest: str, base: Optional[Path] = None) -> Path:
    """``<output dir>/<command>-<digest>``; the same config always lands in the same place."""
    name = f"{command}-{config_digest}"
    root = Path(base) if base is not None else get_runtime_output_dir()
    return _make_dir(root / name, TMP_ROOT / "defusion-runs" / name)
