"""Tests for safetensors checkpoints."""
import json

import numpy as np
import pytest
from safetensors.numpy import save_file

from autograd import load_checkpoint, save_checkpoint
from autograd.checkpoint import metadata_json
from errors import CheckpointError
from models.layers import MLP


def test_round_trip_is_bitwise(tmp_path, rng):
    """Every parameter survives save/load bit for bit, dtype included."""
    model = MLP([3, 5, 1], rng).astype(np.float32)
    path = save_checkpoint(tmp_path / "model.safetensors", model.state_dict(), {"holdout_fold": 2})
    state, metadata = load_checkpoint(path)
    assert set(state) == set(model.state_dict())
    for name, array in model.state_dict().items():
        assert state[name].dtype == np.float32
        assert state[name].tobytes() == array.tobytes()
    assert metadata_json(metadata, "holdout_fold") == 2


def test_metadata_json_encodes_nested_values(tmp_path):
    """Dict metadata comes back as the same dict."""
    config = {"d_img": 32, "days": [1, 2, 3]}
    path = save_checkpoint(tmp_path / "m.safetensors", {"w": np.zeros(2)}, {"config": config, "note": "plain"})
    _, metadata = load_checkpoint(path)
    assert metadata_json(metadata, "config") == config
    assert metadata["note"] == "plain"


def test_missing_metadata_key(tmp_path):
    """Asking for absent metadata is a checkpoint error."""
    path = save_checkpoint(tmp_path / "m.safetensors", {"w": np.zeros(2)})
    _, metadata = load_checkpoint(path)
    with pytest.raises(CheckpointError):
        metadata_json(metadata, "config")


def test_missing_file(tmp_path):
    """Loading a path that does not exist fails cleanly."""
    with pytest.raises(CheckpointError):
        load_checkpoint(tmp_path / "absent.safetensors")


def test_corrupt_file(tmp_path):
    """Random bytes are not a checkpoint."""
    path = tmp_path / "bad.safetensors"
    path.write_bytes(b"\x08\x00\x00\x00\x00\x00\x00\x00not-json")
    with pytest.raises(CheckpointError):
        load_checkpoint(path)


def test_foreign_format_version(tmp_path):
    """Files without our format tag are rejected."""
    path = tmp_path / "foreign.safetensors"
    save_file({"w": np.zeros(2)}, str(path), metadata={"format_version": json.dumps(99)})
    with pytest.raises(CheckpointError):
        load_checkpoint(path)
