"""Grad-CAM, Grad-CAM++, Score-CAM and Layer-CAM heatmaps, plus overlays.

Activation and gradient blocks are ``h x w x c`` arrays (channel last) for
a single image.  Every method produces a raw ``h x w`` relevance map which
is bilinearly upsampled to the input size and min-max normalised.
"""

import json
import logging
import warnings
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import torch

from ._resize import bilinear_resize
from .dataset import CLASS_NAMES
from .errors import LeafscopeError

log = logging.getLogger(__name__)

METHODS = ("gradcam", "gradcampp", "scorecam", "layercam")


class CamError(LeafscopeError):
    pass


@dataclass
class Heatmap:
    values: np.ndarray
    method: str
    layer: str | None = None
    class_index: int | None = None


def _relu(x):
    return np.maximum(x, 0.0)


def _as_block(acts, grads=None):
    acts = np.asarray(acts, dtype=np.float64)
    if acts.ndim == 2:
        acts = acts[..., None]
    if acts.ndim != 3 or min(acts.shape) < 1:
        raise CamError(f"activation block must be h x w x c, got shape {acts.shape}")
    if grads is None:
        return acts
    grads = np.asarray(grads, dtype=np.float64)
    if grads.ndim == 2:
        grads = grads[..., None]
    if grads.shape != acts.shape:
        raise CamError(f"gradient shape {grads.shape} != activation shape {acts.shape}")
    return acts, grads


def normalize_map(raw):
    """Min-max normalise to ``[0, 1]``; an all-zero map stays zero, a constant one becomes ones."""
    raw = np.asarray(raw, dtype=np.float64)
    lo, hi = raw.min(), raw.max()
    if hi == lo:
        return np.zeros_like(raw) if hi == 0 else np.ones_like(raw)
    return (raw - lo) / (hi - lo)


def upsample_normalize(raw, input_size):
    """Bilinear upsample of an ``h x w`` map to ``input_size`` then min-max normalise."""
    if isinstance(input_size, int):
        input_size = (input_size, input_size)
    up = bilinear_resize(np.asarray(raw, dtype=np.float64), tuple(input_size))
    return normalize_map(up)


def grad_cam_raw(acts, grads):
    acts, grads = _as_block(acts, grads)
    weights = grads.mean(axis=(0, 1))
    return _relu(acts @ weights)


def grad_cam_pp_weights(acts, grads):
    """Per-channel Grad-CAM++ weights, using powers of the first-order gradient."""
    acts, grads = _as_block(acts, grads)
    grad2 = grads ** 2
    grad3 = grads ** 3
    denom = 2.0 * grad2 + acts.sum(axis=(0, 1)) * grad3
    alpha = np.divide(grad2, denom, out=np.zeros_like(grad2), where=denom != 0)
    return (alpha * _relu(grads)).sum(axis=(0, 1))


def grad_cam_pp_raw(acts, grads):
    acts = _as_block(acts)
    return _relu(acts @ grad_cam_pp_weights(acts, grads))


def layer_cam_raw(acts, grads):
    acts, grads = _as_block(acts, grads)
    return _relu((_relu(grads) * acts).sum(axis=2))


def grad_cam(acts, grads, input_size, layer=None, class_index=None):
    return Heatmap(upsample_normalize(grad_cam_raw(acts, grads), input_size),
                   "gradcam", layer, class_index)


def grad_cam_pp(acts, grads, input_size, layer=None, class_index=None):
    return Heatmap(upsample_normalize(grad_cam_pp_raw(acts, grads), input_size),
                   "gradcampp", layer, class_index)


def layer_cam(acts, grads, input_size, layer=None, class_index=None):
    return Heatmap(upsample_normalize(layer_cam_raw(acts, grads), input_size),
                   "layercam", layer, class_index)


def capture_activation(model, image, layer):
    """One forward pass returning the ``h x w x c`` activation at ``layer``."""
    if layer not in model.layers:
        raise CamError(f"unknown layer {layer!r}")
    captured = {}

    def hook(module, inputs, output):
        captured["a"] = output.detach().clone()

    handle = model.layers[layer].register_forward_hook(hook)
    model.module.eval()
    try:
        with torch.no_grad():
            logits = model.run(model.to_input(image))
    finally:
        handle.remove()
    act = captured["a"]
    if act.ndim != 4:
        raise CamError(f"layer {layer!r} does not produce a 4-D activation")
    return act[0].permute(1, 2, 0).numpy(), logits[0].numpy()


def score_cam_masks(acts, input_size):
    """Upsampled, min-max normalised channel masks and the indices of participating channels."""
    acts = _as_block(acts)
    up = bilinear_resize(acts, tuple(input_size))
    lo = up.min(axis=(0, 1))
    hi = up.max(axis=(0, 1))
    # constant channels carry no spatial information
    keep = np.flatnonzero(hi > lo)
    masks = (up[..., keep] - lo[keep]) / (hi[keep] - lo[keep])
    return masks, keep


def score_cam_weights(scores):
    scores = np.asarray(scores, dtype=np.float64)
    z = np.exp(scores - scores.max())
    return z / z.sum()


SCORE_MODES = ("logit", "probability")


def score_cam(model, image, layer=None, class_index=None, batch_size=32, score="logit"):
    """Gradient-free CAM: each channel is weighted by the class score the
    network assigns to the input masked with that channel's upsampled map.

    ``score`` picks the class logit (default) or its softmax probability;
    the per-channel scores then go through a softmax.  Runs one forward
    pass for the activation plus one per participating channel, and never
    calls backward.
    """
    if score not in SCORE_MODES:
        raise CamError(f"unknown score mode {score!r}; choose from {', '.join(SCORE_MODES)}")
    layer = layer or model.spec.default_cam_layer
    image = np.asarray(image, dtype=np.float32)
    if image.ndim == 4:
        image = image[0]
    size = image.shape[:2]
    acts, logits = capture_activation(model, image, layer)
    if class_index is None:
        class_index = int(np.argmax(logits))

    masks, keep = score_cam_masks(acts, size)
    if keep.size == 0:
        warnings.warn("Score-CAM: every channel is constant; returning an all-zero map",
                      stacklevel=2)
        return Heatmap(np.zeros(size), "scorecam", layer, class_index)

    base = model.to_input(image)
    scores = []
    model.module.eval()
    with torch.no_grad():
        for start in range(0, keep.size, batch_size):
            m = torch.from_numpy(masks[..., start:start + batch_size]).permute(2, 0, 1)
            masked = base * m[:, None].to(base.dtype)
            out = model.run(masked).double()
            if score == "probability":
                out = torch.softmax(out, dim=1)
            scores.append(out[:, class_index].numpy())
    weights = score_cam_weights(np.concatenate(scores))
    raw = _relu(acts[..., keep].astype(np.float64) @ weights)
    return Heatmap(upsample_normalize(raw, size), "scorecam", layer, class_index)


# blue -> cyan -> green -> yellow -> red
RAMP_POSITIONS = (0.0, 0.25, 0.5, 0.75, 1.0)
RAMP_COLORS = (
    (0.0, 0.0, 1.0),
    (0.0, 1.0, 1.0),
    (0.0, 1.0, 0.0),
    (1.0, 1.0, 0.0),
    (1.0, 0.0, 0.0),
)


def colorize(heatmap, colormap="bluered"):
    """Map an ``H x W`` array in ``[0, 1]`` to RGB.

    ``"bluered"`` is the built-in five-stop ramp above; any other name is
    looked up in matplotlib.
    """
    values = np.clip(np.asarray(heatmap, dtype=np.float64), 0.0, 1.0)
    if colormap == "bluered":
        ramp = np.asarray(RAMP_COLORS)
        return np.stack(
            [np.interp(values, RAMP_POSITIONS, ramp[:, ch]) for ch in range(3)], axis=-1
        )
    import matplotlib

    try:
        cmap = matplotlib.colormaps[colormap]
    except KeyError:
        raise CamError(f"unknown colormap {colormap!r}") from None
    return cmap(values)[..., :3]


def overlay(image, heatmap, alpha=0.4, colormap="bluered"):
    """``(1 - alpha) * image + alpha * colormap(heatmap)``, clamped to ``[0, 1]``."""
    values = heatmap.values if isinstance(heatmap, Heatmap) else np.asarray(heatmap)
    image = np.asarray(image, dtype=np.float64)
    if image.shape[:2] != values.shape:
        raise CamError(f"heatmap {values.shape} does not match image {image.shape[:2]}")
    if not 0 <= alpha <= 1:
        raise CamError("alpha must lie in [0, 1]")
    return np.clip((1 - alpha) * image + alpha * colorize(values, colormap), 0.0, 1.0)


def compute(model, image, method, layer=None, class_index=0):
    """Run one CAM method on a single ``H x W x 3`` image."""
    layer = layer or model.spec.default_cam_layer
    size = np.asarray(image).shape[:2]
    if method == "scorecam":
        return score_cam(model, image, layer, class_index)
    funcs = {"gradcam": grad_cam, "gradcampp": grad_cam_pp, "layercam": layer_cam}
    if method not in funcs:
        raise CamError(f"unknown CAM method {method!r}; choose from {', '.join(METHODS)}")
    taps = model.forward_with_taps(image, [layer], class_index)
    return funcs[method](taps.activations[layer][0], taps.gradients[layer][0], size,
                         layer, class_index)


def _save_png(array, path):
    from PIL import Image

    Image.fromarray(np.clip(np.rint(array * 255), 0, 255).astype(np.uint8)).save(path)


def explain(model, image, methods=METHODS, layer=None, class_index=None, out_dir=None,
            alpha=0.4, colormap="bluered"):
    """Heatmaps and overlays for several methods on one image.

    ``image`` is a path or an ``H x W x 3`` array at the model input size.
    With no ``class_index`` the predicted class is explained.  A method that
    fails is reported in the record's ``errors`` and the rest still run.
    When ``out_dir`` is given, writes ``heatmap_<method>.png``,
    ``overlay_<method>.png`` and ``prediction.json``.
    """
    from .preprocess import load_and_resize

    if isinstance(image, (str, Path)):
        image = load_and_resize(image, model.spec.input_side)
    layer = layer or model.spec.default_cam_layer
    probs = model.softmax(image)[0]
    predicted = int(np.argmax(probs))
    target = predicted if class_index is None else int(class_index)
    names = CLASS_NAMES if model.num_classes == len(CLASS_NAMES) else None

    heatmaps, overlays, errors = {}, {}, {}
    for method in methods:
        try:
            hm = compute(model, image, method, layer, target)
        except Exception as exc:  # one failing method must not abort the others
            log.warning("%s failed: %s", method, exc)
            errors[method] = f"{type(exc).__name__}: {exc}"
            continue
        heatmaps[method] = hm
        overlays[method] = overlay(image, hm, alpha, colormap)

    record = {
        "predicted_label": names[predicted] if names else predicted,
        "predicted_index": predicted,
        "softmax": [float(p) for p in probs],
        "class_used": target,
        "class_used_label": names[target] if names else target,
        "layer_used": layer,
        "methods": list(heatmaps),
    }
    if errors:
        record["errors"] = errors

    if out_dir is not None:
        out_dir = Path(out_dir)
        out_dir.mkdir(parents=True, exist_ok=True)
        for method, hm in heatmaps.items():
            _save_png(hm.values, out_dir / f"heatmap_{method}.png")
            _save_png(overlays[method], out_dir / f"overlay_{method}.png")
        (out_dir / "prediction.json").write_text(json.dumps(record, indent=2) + "\n")
    return heatmaps, overlays, record
