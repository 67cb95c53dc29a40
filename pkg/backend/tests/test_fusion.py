"""Tests for the decoupling fusion head, losses and the assembled network."""
import math
from dataclasses import replace

import numpy as np
import pytest

from autograd import constant, load_checkpoint, save_checkpoint
from errors import ConfigError, DatasetError, ShapeError
from experiments.gradcheck_suite import THRESHOLD, TINY_IMAGE, TINY_MODEL, TINY_TABLE, check_defusion
from models import DeFusionNet
from models.fusion import (
    PROB_EPS,
    AlignedFeatures,
    Classifier,
    DecouplingModule,
    binary_cross_entropy,
    cross_reconstruction_loss,
    total_loss,
)


def _inputs(rng, batch=3):
    images = constant(rng.normal(size=(batch, TINY_IMAGE.num_days, TINY_IMAGE.image_size, TINY_IMAGE.image_size)))
    table = constant(rng.uniform(size=(batch, TINY_TABLE.num_indicators)))
    return images, table


def test_common_encoder_is_shared(rng):
    """Both modalities go through the same common encoder weights."""
    module = DecouplingModule(4, 3, 8, rng)
    x = constant(rng.normal(size=(2, 4)))
    decoupled = module(AlignedFeatures(x, x))
    np.testing.assert_array_equal(decoupled.image_common.data, decoupled.table_common.data)
    assert not np.array_equal(decoupled.image_unique.data, decoupled.table_unique.data)


def test_common_weights_drive_both_common_parts(rng):
    """Changing the shared encoder moves both common parts and neither unique part."""
    module = DecouplingModule(4, 3, 8, rng)
    aligned = AlignedFeatures(constant(rng.normal(size=(2, 4))), constant(rng.normal(size=(2, 4))))
    before = module(aligned).as_arrays()
    module.common.layers[0].weight.data = module.common.layers[0].weight.data + 0.5
    after = module(aligned).as_arrays()
    assert not np.allclose(before["img_related"], after["img_related"])
    assert not np.allclose(before["tab_related"], after["tab_related"])
    np.testing.assert_array_equal(before["img_unrelated"], after["img_unrelated"])
    np.testing.assert_array_equal(before["tab_unrelated"], after["tab_unrelated"])


def test_checkpoint_stores_one_common_encoder(rng, tmp_path):
    """A saved model holds the common encoder weights once, under decouple.common."""
    model = DeFusionNet(TINY_MODEL, rng)
    state, _ = load_checkpoint(save_checkpoint(tmp_path / "model.safetensors", model.state_dict()))
    common = sorted(name for name in state if "common" in name)
    assert common == sorted(f"decouple.common.{name}" for name, _ in model.decouple.common.named_parameters())
    assert len(common) == 4


def test_reconstruction_swaps_common_parts(rng):
    """Image is rebuilt from the table's common part and vice versa."""
    module = DecouplingModule(4, 3, 8, rng)
    decoupled = module(AlignedFeatures(constant(rng.normal(size=(2, 4))), constant(rng.normal(size=(2, 4)))))
    rec_i, rec_t = module.reconstruct(decoupled)
    expected_i = module.image_decoder(
        constant(np.concatenate([decoupled.table_common.data, decoupled.image_unique.data], axis=-1))
    )
    expected_t = module.table_decoder(
        constant(np.concatenate([decoupled.image_common.data, decoupled.table_unique.data], axis=-1))
    )
    np.testing.assert_allclose(rec_i.data, expected_i.data, rtol=1e-12)
    np.testing.assert_allclose(rec_t.data, expected_t.data, rtol=1e-12)
    assert rec_i.shape == rec_t.shape == (2, 4)


def test_reconstruction_loss_value():
    """|1-3| + |2+1| on the image side, zero on the table side."""
    loss = cross_reconstruction_loss(
        constant([[1.0, 2.0]]), constant([[0.0, 0.0]]), constant([[3.0, -1.0]]), constant([[0.0, 0.0]])
    )
    assert loss.item() == 5.0


def test_reconstruction_loss_averages_over_batch():
    """Per-sample sums are averaged, not summed."""
    zeros = constant(np.zeros((2, 2)))
    loss = cross_reconstruction_loss(constant([[1.0, 1.0], [3.0, 3.0]]), zeros, zeros, zeros)
    assert loss.item() == 4.0


def test_perfect_reconstruction_costs_nothing(rng):
    """Reconstructions equal to their targets give L_recon = 0."""
    f_i, f_t = constant(rng.normal(size=(4, 5))), constant(rng.normal(size=(4, 5)))
    assert cross_reconstruction_loss(f_i, f_t, f_i, f_t).item() == 0.0


def test_reconstruction_loss_matches_explicit_loop(rng):
    """Batch of 8: mean over samples of the summed absolute errors of both sides."""
    f_i, f_t, rec_i, rec_t = (rng.normal(size=(8, 5)) for _ in range(4))
    total = 0.0
    for b in range(8):
        for d in range(5):
            total += abs(f_i[b, d] - rec_i[b, d]) + abs(f_t[b, d] - rec_t[b, d])
    loss = cross_reconstruction_loss(constant(f_i), constant(f_t), constant(rec_i), constant(rec_t))
    assert loss.item() == pytest.approx(total / 8, rel=1e-12)


def test_reconstruction_loss_rejects_empty_batch():
    """An empty batch has no mean."""
    empty = constant(np.zeros((0, 2)))
    with pytest.raises(ShapeError):
        cross_reconstruction_loss(empty, empty, empty, empty)


def test_bce_at_one_half_is_log_two():
    """p = 0.5 costs log 2 whatever the label."""
    loss = binary_cross_entropy(constant([0.5, 0.5]), np.array([0, 1]))
    assert loss.item() == pytest.approx(math.log(2.0), rel=1e-12)


def test_bce_clamps_confident_mistakes():
    """Fully wrong predictions are clamped to -log(1e-7)."""
    loss = binary_cross_entropy(constant([0.0, 1.0]), np.array([1, 0]))
    assert np.isfinite(loss.item())
    assert loss.item() == pytest.approx(-math.log(PROB_EPS), rel=1e-6)


def test_bce_rejects_bad_labels():
    """Labels must be 0/1 and match the batch."""
    with pytest.raises(DatasetError):
        binary_cross_entropy(constant([0.5]), np.array([2]))
    with pytest.raises(ShapeError):
        binary_cross_entropy(constant([0.5, 0.5]), np.array([1]))


def test_total_loss_weights_reconstruction():
    """L = L_ce + lambda * L_recon."""
    probs = constant([0.5, 0.5])
    loss, ce = total_loss(probs, np.array([0, 1]), constant(2.0), 0.25)
    assert loss.item() == pytest.approx(math.log(2.0) + 0.5, rel=1e-12)
    assert ce.item() == pytest.approx(math.log(2.0), rel=1e-12)


def test_total_loss_zero_lambda_is_plain_cross_entropy():
    """With lambda 0 the total loss is the cross-entropy node itself."""
    loss, ce = total_loss(constant([0.3, 0.8]), np.array([0, 1]), constant(7.0), 0.0)
    assert loss is ce


@pytest.mark.parametrize("lam", [-1.0, float("nan"), float("inf")])
def test_total_loss_rejects_bad_lambda(lam):
    """Lambda must be finite and non-negative."""
    with pytest.raises(ConfigError):
        total_loss(constant([0.5]), np.array([1]), constant(1.0), lam)


@pytest.mark.parametrize(
    "overrides,width",
    [
        ({}, 16),
        ({"classifier_input": "reconstructed"}, 8),
        ({"fusion": "concat"}, 8),
        ({"fusion": "add"}, 4),
        ({"modality": "image"}, 4),
        ({"modality": "table"}, 4),
    ],
)
def test_classifier_input_width(rng, overrides, width):
    """Classifier input is 4M, 2d_f, d_f or the extractor width."""
    model = DeFusionNet(replace(TINY_MODEL, **overrides), rng)
    assert model.classifier.mlp.layers[0].in_features == width


@pytest.mark.parametrize(
    "overrides", [{}, {"classifier_input": "reconstructed"}, {"fusion": "concat"}, {"fusion": "add"}]
)
def test_multimodal_forward(rng, overrides):
    """Probabilities are (B,) in (0, 1); only decoupling yields a reconstruction loss."""
    model = DeFusionNet(replace(TINY_MODEL, **overrides), rng)
    output = model(*_inputs(rng))
    assert output.probs.shape == (3,)
    assert np.all((output.probs.data > 0) & (output.probs.data < 1))
    assert (output.recon is not None) == (model.config.fusion == "decoupling")
    assert (output.decoupled is not None) == (model.config.fusion == "decoupling")


def test_decoupled_features_dump(rng):
    """as_arrays exposes four (B, M) arrays under their dump names."""
    model = DeFusionNet(TINY_MODEL, rng)
    arrays = model(*_inputs(rng)).decoupled.as_arrays()
    assert set(arrays) == {"img_related", "tab_related", "img_unrelated", "tab_unrelated"}
    assert all(a.shape == (3, TINY_MODEL.m) for a in arrays.values())


def test_image_only_model_ignores_table(rng):
    """The image-only variant builds no table extractor and accepts table=None."""
    model = DeFusionNet(replace(TINY_MODEL, modality="image"), rng)
    assert model.table_extractor is None
    images, _ = _inputs(rng)
    assert model(images, None).probs.shape == (3,)


def test_table_only_model_ignores_images(rng):
    """The table-only variant runs without images."""
    model = DeFusionNet(replace(TINY_MODEL, modality="table"), rng)
    assert model.image_extractor is None
    _, table = _inputs(rng)
    assert model(None, table).probs.shape == (3,)


def test_lambda_ignored_without_decoupling(rng):
    """Concat fusion trains on cross-entropy alone whatever lambda is."""
    model = DeFusionNet(replace(TINY_MODEL, fusion="concat"), rng)
    output = model(*_inputs(rng))
    loss, ce = model.loss(output, np.array([0, 1, 1]), lam=5.0)
    assert loss is ce


def test_parameter_groups_partition_everything(rng):
    """Every parameter lands in exactly one of image / table / fusion."""
    model = DeFusionNet(TINY_MODEL, rng)
    groups = model.parameter_groups()
    assert set(groups) == {"image", "table", "fusion"}
    names = [name for members in groups.values() for name, _ in members]
    assert sorted(names) == sorted(name for name, _ in model.named_parameters())
    assert all(name.startswith("image_extractor.") for name, _ in groups["image"])
    assert all(name.startswith("table_extractor.") for name, _ in groups["table"])
    assert any(name.startswith("decouple.common.") for name, _ in groups["fusion"])


@pytest.mark.parametrize(
    "overrides", [{"fusion": "sum"}, {"modality": "audio"}, {"classifier_input": "raw"}, {"m": 0}]
)
def test_invalid_model_configs(rng, overrides):
    """Unknown variants and empty dims are config errors."""
    with pytest.raises(ConfigError):
        DeFusionNet(replace(TINY_MODEL, **overrides), rng)


def test_full_model_gradients():
    """The whole network, reconstruction loss included, passes the gradient check."""
    outcome = check_defusion()
    assert outcome.checked > 0
    assert outcome.max_error < THRESHOLD


def test_zero_weight_classifier_outputs_one_half(rng):
    """All-zero weights and biases give logit 0, so p = 0.5 for any input."""
    classifier = Classifier(6, 4, rng)
    for _, param in classifier.named_parameters():
        param.data = np.zeros_like(param.data)
    probs = classifier(constant(rng.normal(size=(5, 6))))
    np.testing.assert_array_equal(probs.data, 0.5)


@pytest.mark.parametrize("lam", [0.0, 1.0])
def test_loss_gradients_reach_both_extractors(rng, lam):
    """Backprop through the alignment maps leaves non-zero gradients in both extractors."""
    model = DeFusionNet(TINY_MODEL, rng)
    images, table = _inputs(rng, batch=4)
    loss, _ = model.loss(model(images, table), np.array([0, 1, 1, 0]), lam)
    loss.backward()
    for prefix in ("image_extractor.", "table_extractor.", "align.image.", "align.table."):
        grads = [p.grad for name, p in model.named_parameters() if name.startswith(prefix)]
        assert grads, prefix
        assert any(g is not None and np.abs(g).max() > 0 for g in grads), prefix
