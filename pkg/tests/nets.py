"""Small networks with known gradients, used as oracles."""

import numpy as np
import torch
from torch import nn

from leafscope.backbones import BackboneSpec, ModelHandle, ToyNet


class LinearSumNet(nn.Module):
    """One conv layer ``feat``; logit of class ``c`` is ``(c + 1) * sum(feat) + shift``.

    The gradient of class ``c`` with respect to ``feat`` is the constant ``c + 1``.
    """

    def __init__(self, channels=3, num_classes=5, shift=0.0, seed=0):
        super().__init__()
        gen = torch.Generator().manual_seed(seed)
        self.feat = nn.Conv2d(3, channels, 3, padding=1)
        with torch.no_grad():
            self.feat.weight.copy_(torch.randn(self.feat.weight.shape, generator=gen) * 0.5)
            self.feat.bias.copy_(torch.randn(channels, generator=gen) * 0.1)
        self.register_buffer("scale", torch.arange(1, num_classes + 1, dtype=torch.float32))
        self.shift = shift

    def forward(self, x):
        s = self.feat(x).sum(dim=(1, 2, 3))
        return s[:, None] * self.scale[None] + self.shift


def handle(module, side, layer, num_classes=5, dtype=torch.float64):
    module = module.to(dtype)
    return ModelHandle(module, BackboneSpec("custom", side, layer, False), num_classes)


def linear_sum_model(side=8, channels=3, shift=0.0, seed=0):
    return handle(LinearSumNet(channels, shift=shift, seed=seed), side, "feat")


def toy_model(side=16, seed=0, num_classes=5, smooth=False):
    """The toy backbone in float64; ``smooth`` swaps ReLU for Softplus (no kinks)."""
    torch.manual_seed(seed)
    net = ToyNet(num_classes)
    if smooth:
        net.act1, net.act2 = nn.Softplus(), nn.Softplus()
    return handle(net, side, "conv2", num_classes)


def bilinear_oracle(a, out_h, out_w):
    """Loop implementation of half-pixel-centre bilinear resampling of a 2-D map."""
    a = np.asarray(a, dtype=np.float64)
    h, w = a.shape
    out = np.empty((out_h, out_w))
    for i in range(out_h):
        y = max((i + 0.5) * h / out_h - 0.5, 0.0)
        y0 = min(int(np.floor(y)), h - 1)
        y1 = min(y0 + 1, h - 1)
        wy = y - y0
        for j in range(out_w):
            x = max((j + 0.5) * w / out_w - 0.5, 0.0)
            x0 = min(int(np.floor(x)), w - 1)
            x1 = min(x0 + 1, w - 1)
            wx = x - x0
            out[i, j] = ((1 - wy) * ((1 - wx) * a[y0, x0] + wx * a[y0, x1])
                         + wy * ((1 - wx) * a[y1, x0] + wx * a[y1, x1]))
    return out


def minmax_oracle(m):
    lo, hi = m.min(), m.max()
    if hi == lo:
        return np.zeros_like(m) if hi == 0 else np.ones_like(m)
    return (m - lo) / (hi - lo)
