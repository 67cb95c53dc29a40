"""Tests for experiment configuration resolution."""
import json

import pytest

from errors import ConfigError
from experiments import PROFILES, build_config, resolve_config


def test_desk_profile_defaults():
    """Desk profile: 36 -> 32 crop, stride 8, 18 epochs after 2 pretraining epochs, lambda 0.1 ramped over 3."""
    cfg = resolve_config("desk")
    assert (cfg.image_size, cfg.resize, cfg.stride, cfg.epochs) == (32, 36, 8, 18)
    assert (cfg.lam, cfg.lambda_warmup, cfg.pretrain_epochs) == (0.1, 3, 2)
    assert cfg.days == (1, 2, 3)


@pytest.mark.parametrize("name", ["paper", "full"])
def test_paper_profile_rates(name):
    """Published-scale profile (alias full): 224 crop from 256, lambda 1, per-module rates 1e-6 / 1e-4 / 1e-5."""
    cfg = resolve_config(name)
    assert cfg.profile == "paper"
    assert (cfg.lam, cfg.lambda_warmup) == (1.0, 0)
    assert (cfg.image_size, cfg.resize, cfg.stride) == (224, 256, 32)
    assert (cfg.lr_img, cfg.lr_tab, cfg.lr_fusion) == (1e-6, 1e-4, 1e-5)
    assert cfg.num_indicators == 22
    assert cfg.model().image.map_size == 7


def test_file_overrides_profile_and_flags_override_file(tmp_path):
    """profile < JSON file < explicit overrides."""
    path = tmp_path / "cfg.json"
    path.write_text(json.dumps({"epochs": 3, "batch_size": 8, "lambda": 0.5}))
    cfg = resolve_config("desk", path, {"epochs": 7, "batch_size": None})
    assert cfg.epochs == 7
    assert cfg.batch_size == 8
    assert cfg.lam == 0.5


def test_profile_named_in_file_wins_over_default(tmp_path):
    """A profile key inside the file selects that profile's defaults."""
    path = tmp_path / "cfg.json"
    path.write_text(json.dumps({"profile": "full"}))
    assert resolve_config("desk", path).image_size == 224


def test_lambda_alias_and_lam_keyword():
    """Both 'lambda' and 'lam' set the reconstruction weight."""
    assert build_config({"lambda": 0.25}).lam == 0.25
    assert build_config({"lam": 0.75}).lam == 0.75
    assert build_config({"lambda": 0.25}).to_json_dict()["lambda"] == 0.25


def test_days_accept_strings_and_dedupe():
    """'3,1' and [3, 1, 3] both mean days (1, 3)."""
    assert build_config({"days": "3,1"}).days == (1, 3)
    assert build_config({"days": [3, 1, 3]}).days == (1, 3)


def test_selected_days_set_model_day_count():
    """The image extractor sees only the selected days."""
    cfg = build_config({"days": [3]})
    assert cfg.model().image.num_days == 1
    assert cfg.num_days == 3


@pytest.mark.parametrize(
    "values",
    [
        {"image_size": 30},
        {"stride": 6},
        {"heads": 3},
        {"days": [4]},
        {"days": []},
        {"lambda": -1.0},
        {"lr_img": float("nan")},
        {"k": 1},
        {"holdout_fold": 5},
        {"resize": 16},
        {"pe": "rope"},
        {"unknown_field": 1},
        {"epochs": 0},
        {"lambda_warmup": -1},
        {"pretrain_epochs": -1},
    ],
)
def test_invalid_values_raise_config_error(values):
    """Validation failures surface as ConfigError."""
    with pytest.raises(ConfigError):
        build_config(values)


def test_unknown_profile():
    """Only the defined profiles resolve."""
    with pytest.raises(ConfigError):
        resolve_config("huge")
    assert set(PROFILES) == {"desk", "paper"}


def test_bad_config_files(tmp_path):
    """Missing, malformed and non-object files are config errors."""
    with pytest.raises(ConfigError):
        resolve_config("desk", tmp_path / "absent.json")
    broken = tmp_path / "broken.json"
    broken.write_text("{not json")
    with pytest.raises(ConfigError):
        resolve_config("desk", broken)
    listed = tmp_path / "list.json"
    listed.write_text("[1, 2]")
    with pytest.raises(ConfigError):
        resolve_config("desk", listed)


def test_digest_is_stable_and_sensitive():
    """Equal configs hash alike; any field change changes the digest."""
    a = resolve_config("desk")
    assert a.digest() == resolve_config("desk").digest()
    assert a.digest() != a.with_overrides(seed=1).digest()
    assert len(a.digest()) == 12


def test_with_overrides_revalidates():
    """Overrides go through the same validation."""
    cfg = resolve_config("desk")
    assert cfg.with_overrides(pe="sincos", lam=0.0).pe == "sincos"
    with pytest.raises(ConfigError):
        cfg.with_overrides(stride=5)


@pytest.mark.parametrize(
    "overrides,expected",
    [({}, 0.1), ({"lambda": 1.0}, 1.0), ({"fusion": "concat"}, 0.0), ({"fusion": "add"}, 0.0), ({"modality": "image"}, 0.0)],
)
def test_effective_lambda(overrides, expected):
    """Lambda only counts when the decoupling module is active."""
    assert resolve_config("desk", overrides=overrides).effective_lambda() == expected


def test_config_is_frozen():
    """Resolved configs are immutable."""
    cfg = resolve_config("desk")
    with pytest.raises(Exception):
        cfg.epochs = 3


def test_lambda_ramp():
    """Warm-up ramps lambda linearly from 0 in epoch 1 to the full weight."""
    cfg = build_config({"lambda": 0.3, "lambda_warmup": 3})
    assert [cfg.lambda_at(epoch) for epoch in (1, 2, 3, 4, 10)] == pytest.approx([0.0, 0.1, 0.2, 0.3, 0.3])
    assert build_config({"lambda": 0.3}).lambda_at(1) == 0.3
