"""Parameter checkpoints as safetensors files.

The container is a JSON header (name, dtype, shape, byte offsets) followed by
raw little-endian payloads. Free-form string metadata rides in the header; we
use it for the resolved experiment config and the training-fold table stats.
"""
from __future__ import annotations

import json
import logging
from pathlib import Path
from typing import Any, Optional

import numpy as np
from safetensors import SafetensorError, safe_open
from safetensors.numpy import save_file

from errors import CheckpointError

logger = logging.getLogger(__name__)

FORMAT_VERSION = "1"


def save_checkpoint(
    path: Path,
    state: dict[str, np.ndarray],
    metadata: Optional[dict[str, Any]] = None,
) -> Path:
    """Write ``state`` to ``path``; non-string metadata values are JSON-encoded."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    header = {"format_version": FORMAT_VERSION}
    for key, value in (metadata or {}).items():
        header[key] = value if isinstance(value, str) else json.dumps(value, sort_keys=True)
    tensors = {name: np.ascontiguousarray(array) for name, array in state.items()}
    save_file(tensors, str(path), metadata=header)
    logger.info("Saved checkpoint with %d tensors to %s", len(tensors), path)
    return path


def load_checkpoint(path: Path) -> tuple[dict[str, np.ndarray], dict[str, str]]:
    """Return (state, raw metadata) from a file written by ``save_checkpoint``."""
    path = Path(path)
    if not path.is_file():
        raise CheckpointError(f"checkpoint not found: {path}")
    try:
        with safe_open(str(path), framework="np") as handle:
            metadata = dict(handle.metadata() or {})
            state = {name: handle.get_tensor(name) for name in handle.keys()}
    except (SafetensorError, OSError, ValueError) as exc:
        raise CheckpointError(f"cannot read checkpoint {path}: {exc}") from exc
    version = metadata.get("format_version")
    if version != FORMAT_VERSION:
        raise CheckpointError(f"unsupported checkpoint format version {version!r} in {path}")
    return state, metadata


def metadata_json(metadata: dict[str, str], key: str) -> Any:
    if key not in metadata:
        raise CheckpointError(f"checkpoint metadata has no '{key}' entry")
    try:
        return json.loads(metadata[key])
    except json.JSONDecodeError as exc:
        raise CheckpointError(f"checkpoint metadata '{key}' is not valid JSON") from exc
