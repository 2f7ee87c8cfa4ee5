"""
Four class activation maps
==========================

Grad-CAM, Grad-CAM++ and Layer-CAM read gradients at a tapped layer.
Score-CAM instead masks the input with each channel and scores it, so it
needs no backward pass at all.
"""

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt
import numpy as np

from leafscope import cam, fixtures
from leafscope.backbones import build_model, default_spec
from leafscope.preprocess import load_and_resize

model = build_model(default_spec("toy"))
path = sorted(fixtures.fixture_root().glob("Mosaic Disease/*.png"))[0]
image = load_and_resize(path, model.spec.input_side)

###############################################################################
# The gradient methods share the same activation and gradient blocks.

taps = model.forward_with_taps(image, ["act2"], 3)
acts, grads = taps.activations["act2"][0], taps.gradients["act2"][0]
size = image.shape[:2]
maps = {
    "gradcam": cam.grad_cam(acts, grads, size),
    "gradcampp": cam.grad_cam_pp(acts, grads, size),
    "layercam": cam.layer_cam(acts, grads, size),
}

model.forward_passes = model.backward_passes = 0
maps["scorecam"] = cam.score_cam(model, image, "act2", 3)
print("score-cam passes: forward", model.forward_passes, "backward", model.backward_passes)

fig, axes = plt.subplots(1, 4, figsize=(10, 3))
for ax, (name, hm) in zip(axes, maps.items()):
    ax.imshow(cam.overlay(image, hm, alpha=0.5))
    ax.set_title(name)
    ax.axis("off")
fig.savefig("cam_methods.png", dpi=80)
