import json

import numpy as np
import pytest
import torch

from leafscope.backbones import (
    REFERENCE_ARCHITECTURES,
    BackboneError,
    WeightsUnavailableError,
    build_model,
    default_spec,
    load_checkpoint,
    save_checkpoint,
)
from nets import linear_sum_model, toy_model


def finite_difference_check(model, layer, class_index, image, positions, eps=1e-3):
    """Central differences of the batch-summed logit w.r.t. single activation entries."""
    taps = model.forward_with_taps(image, [layer], class_index)
    grads = taps.gradients[layer]
    x = model.to_input(image)
    errors = []
    for pos in positions:
        def logit_with(delta):
            def hook(module, inputs, output):
                out = output.clone()
                out[(pos[0], pos[3], pos[1], pos[2])] += delta
                return out
            h = model.layers[layer].register_forward_hook(hook)
            try:
                with torch.no_grad():
                    return model.module(x)[:, class_index].sum().item()
            finally:
                h.remove()
        fd = (logit_with(eps) - logit_with(-eps)) / (2 * eps)
        g = grads[pos]
        errors.append(abs(fd - g) / max(abs(fd), abs(g), 1e-8))
    return max(errors)


def random_positions(shape, n, rng):
    return [tuple(int(rng.integers(0, s)) for s in shape) for _ in range(n)]


@pytest.mark.parametrize("name", REFERENCE_ARCHITECTURES)
def test_every_reference_architecture_yields_five_logits(name):
    model = build_model(default_spec(name, pretrained=False))
    assert model.spec.input_side == 299
    assert model.spec.default_cam_layer in model.layers
    batch = np.random.default_rng(0).random((2, 299, 299, 3), dtype=np.float32)
    logits = model.forward(batch)
    assert logits.shape == (2, 5)
    assert all(p.requires_grad for p in model.module.parameters())


def test_resnet50_tap_shapes():
    model = build_model(default_spec("ResNet50", pretrained=False))
    image = np.random.default_rng(1).random((1, 299, 299, 3), dtype=np.float32)
    taps = model.forward_with_taps(image, ["layer4"], 2)
    assert taps.activations["layer4"].shape == (1, 10, 10, 2048)
    assert taps.gradients["layer4"].shape == taps.activations["layer4"].shape
    assert np.array_equal(taps.logits, model.forward(image))


def test_densenet_tap_survives_inplace_relu():
    model = build_model(default_spec("DenseNet121", pretrained=False))
    image = np.random.default_rng(2).random((1, 299, 299, 3), dtype=np.float32)
    taps = model.forward_with_taps(image, ["features"], 0)
    # the module's own in-place ReLU must not leak into the captured activation
    assert taps.activations["features"].min() < 0
    assert np.allclose(taps.logits, model.forward(image))


def test_toy_head_width():
    model = build_model(default_spec("toy"), num_classes=2)
    out = model.forward(np.zeros((3, 64, 64, 3), np.float32))
    assert out.shape == (3, 2)


def test_unknown_architecture():
    with pytest.raises(BackboneError, match="VGG16"):
        default_spec("VGG16")


def test_missing_pretrained_weights(tmp_path, monkeypatch):
    monkeypatch.setenv("LEAFSCOPE_WEIGHTS_DIR", str(tmp_path))
    monkeypatch.setenv("LEAFSCOPE_OFFLINE", "1")
    with pytest.raises(WeightsUnavailableError, match="resnet50.pth"):
        build_model(default_spec("ResNet50", pretrained=True))


def test_pretrained_weights_loaded_from_cache(tmp_path, monkeypatch):
    import torchvision

    reference = torchvision.models.resnet50(weights=None)
    torch.save(reference.state_dict(), tmp_path / "resnet50.pth")
    monkeypatch.setenv("LEAFSCOPE_WEIGHTS_DIR", str(tmp_path))
    monkeypatch.setenv("LEAFSCOPE_OFFLINE", "1")
    model = build_model(default_spec("ResNet50", pretrained=True))
    assert torch.equal(model.module.conv1.weight, reference.conv1.weight)
    assert model.module.fc.out_features == 5


def test_forward_shape_and_softmax():
    model = build_model(default_spec("toy"))
    batch = np.random.default_rng(0).random((4, 64, 64, 3), dtype=np.float32)
    assert model.forward(batch).shape == (4, 5)
    assert np.allclose(model.softmax(batch).sum(axis=1), 1.0, atol=1e-6)


def test_forward_rejects_wrong_side():
    model = build_model(default_spec("toy"))
    with pytest.raises(BackboneError):
        model.forward(np.zeros((1, 32, 32, 3), np.float32))


def test_duplicated_sample_gives_identical_rows():
    model = build_model(default_spec("toy"))
    img = np.random.default_rng(0).random((64, 64, 3), dtype=np.float32)
    out = model.forward(np.stack([img, img]))
    assert np.array_equal(out[0], out[1])


def test_zeros_and_ones_differ():
    model = build_model(default_spec("ResNet50", pretrained=False))
    zeros = model.forward(np.zeros((1, 299, 299, 3), np.float32))
    ones = model.forward(np.ones((1, 299, 299, 3), np.float32))
    assert not np.allclose(zeros, ones)


def test_linear_sum_gradient_is_all_ones():
    model = linear_sum_model()
    image = np.random.default_rng(0).random((1, 8, 8, 3))
    taps = model.forward_with_taps(image, ["feat"], 0)
    assert np.array_equal(taps.gradients["feat"], np.ones((1, 8, 8, 3)))


def test_gradient_is_summed_over_batch():
    model = linear_sum_model()
    image = np.random.default_rng(0).random((3, 8, 8, 3))
    taps = model.forward_with_taps(image, ["feat"], 2)
    assert np.array_equal(taps.gradients["feat"], np.full((3, 8, 8, 3), 3.0))


@pytest.mark.parametrize("layer", ["conv1", "act1", "conv2", "act2"])
def test_smooth_toy_gradients_match_finite_differences(layer):
    rng = np.random.default_rng(0)
    model = toy_model(smooth=True)
    image = rng.random((2, 16, 16, 3))
    shape = model.forward_with_taps(image, [layer], 1).activations[layer].shape
    assert finite_difference_check(model, layer, 1, image, random_positions(shape, 10, rng)) < 1e-3


def test_relu_toy_gradients_match_finite_differences_away_from_kinks():
    rng = np.random.default_rng(1)
    model = toy_model()
    image = rng.random((1, 16, 16, 3))
    acts = model.forward_with_taps(image, ["conv2"], 4).activations["conv2"]
    # downstream of conv2 is an element-wise ReLU; stay clear of its kink
    candidates = [tuple(int(i) for i in p) for p in np.argwhere(np.abs(acts) > 1e-2)]
    positions = [candidates[i] for i in rng.choice(len(candidates), 10, replace=False)]
    assert finite_difference_check(model, "conv2", 4, image, positions) < 1e-3


def test_tap_errors():
    model = toy_model()
    image = np.zeros((1, 16, 16, 3))
    with pytest.raises(BackboneError, match="nope"):
        model.forward_with_taps(image, ["nope"], 0)
    with pytest.raises(BackboneError, match="4-D"):
        model.forward_with_taps(image, ["fc"], 0)


def test_tap_logits_equal_forward():
    model = build_model(default_spec("toy"))
    batch = np.random.default_rng(5).random((2, 64, 64, 3), dtype=np.float32)
    taps = model.forward_with_taps(batch, ["act1", "act2"], 3)
    assert np.array_equal(taps.logits, model.forward(batch))
    assert set(taps.activations) == {"act1", "act2"}


def test_checkpoint_roundtrip(tmp_path):
    model = build_model(default_spec("toy"))
    sidecar = save_checkpoint(model, tmp_path / "best.ckpt", epoch=3, val_accuracy=0.5)
    meta = json.loads(sidecar.read_text())
    assert meta == {"architecture": "toy", "num_classes": 5, "input_side": 64,
                    "epoch": 3, "val_accuracy": 0.5}
    again, _ = load_checkpoint(tmp_path / "best.ckpt")
    batch = np.random.default_rng(0).random((2, 64, 64, 3), dtype=np.float32)
    assert np.array_equal(model.forward(batch), again.forward(batch))
