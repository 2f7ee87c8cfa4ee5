"""
Training-time augmentation
==========================

Each transform can be switched off on its own.  A disabled transform
draws no random numbers, so turning one off does not reshuffle the others.
"""

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt
import numpy as np

from leafscope import fixtures
from leafscope.preprocess import AugmentationConfig, augment, load_and_resize

path = sorted(fixtures.fixture_root().glob("Downy Mildew/*.png"))[0]
image = load_and_resize(path, 64)
config = AugmentationConfig()
print(config.to_dict())

rng = np.random.default_rng(0)
variants = [augment(image, config, rng) for _ in range(5)]

fig, axes = plt.subplots(1, 6, figsize=(12, 2.2))
for ax, img, title in zip(axes, [image, *variants], ["original"] + [""] * 5):
    ax.imshow(img)
    ax.set_title(title)
    ax.axis("off")
fig.savefig("augmentation.png", dpi=80)

###############################################################################
# With everything disabled the image passes through untouched.

print(np.array_equal(augment(image, AugmentationConfig.disabled(), rng), image))
