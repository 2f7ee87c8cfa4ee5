"""Pretrained CNN backbones with a fresh classifier head and layer taps.

Images enter as ``B x H x W x 3`` (channels last) and activations/gradients
are returned channels last as well; the torch modules themselves run NCHW.
"""

import json
import os
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np
import torch
from torch import nn

from .errors import LeafscopeError

NUM_CLASSES = 5
WEIGHTS_ENV = "LEAFSCOPE_WEIGHTS_DIR"


class BackboneError(LeafscopeError):
    pass


class WeightsUnavailableError(BackboneError):
    pass


@dataclass(frozen=True)
class BackboneSpec:
    name: str
    input_side: int = 299
    default_cam_layer: str = ""
    pretrained: bool = True


class ToyNet(nn.Module):
    """Two conv layers, global average pool and a linear head (~1.5k parameters)."""

    def __init__(self, num_classes=NUM_CLASSES, width=8):
        super().__init__()
        self.conv1 = nn.Conv2d(3, width, 3, stride=2, padding=1)
        self.act1 = nn.ReLU()
        self.conv2 = nn.Conv2d(width, 2 * width, 3, stride=2, padding=1)
        self.act2 = nn.ReLU()
        self.pool = nn.AdaptiveAvgPool2d(1)
        self.fc = nn.Linear(2 * width, num_classes)

    def forward(self, x):
        x = self.act2(self.conv2(self.act1(self.conv1(x))))
        return self.fc(torch.flatten(self.pool(x), 1))


def _torchvision(fn_name, head_attr):
    def build(num_classes, pretrained):
        import torchvision.models as tvm

        model = getattr(tvm, fn_name)(weights=None)
        if pretrained:
            _load_pretrained(model, fn_name, lambda: getattr(tvm, fn_name)(weights="DEFAULT"))
        head = getattr(model, head_attr)
        setattr(model, head_attr, nn.Linear(head.in_features, num_classes))
        return model

    return build


def _timm(model_name):
    def build(num_classes, pretrained):
        import timm

        model = timm.create_model(model_name, pretrained=False)
        if pretrained:
            _load_pretrained(model, model_name,
                             lambda: timm.create_model(model_name, pretrained=True))
        model.reset_classifier(num_classes)
        return model

    return build


def _toy(num_classes, pretrained):
    return ToyNet(num_classes)


# name -> (builder, input side, default CAM layer)
ARCHITECTURES = {
    "DenseNet121": (_torchvision("densenet121", "classifier"), 299, "features"),
    "DenseNet169": (_torchvision("densenet169", "classifier"), 299, "features"),
    "DenseNet201": (_torchvision("densenet201", "classifier"), 299, "features"),
    "ResNet50": (_torchvision("resnet50", "fc"), 299, "layer4"),
    "ResNet101": (_torchvision("resnet101", "fc"), 299, "layer4"),
    "Xception": (_timm("legacy_xception"), 299, "act4"),
    "InceptionResNetV2": (_timm("inception_resnet_v2"), 299, "conv2d_7b"),
    "toy": (_toy, 64, "act2"),
}
REFERENCE_ARCHITECTURES = tuple(name for name in ARCHITECTURES if name != "toy")


def default_spec(name, pretrained=None):
    if name not in ARCHITECTURES:
        raise BackboneError(
            f"unknown architecture {name!r}; choose from {', '.join(ARCHITECTURES)}"
        )
    _, side, layer = ARCHITECTURES[name]
    if pretrained is None:
        pretrained = name != "toy"
    return BackboneSpec(name, side, layer, pretrained)


def _load_pretrained(model, key, download):
    """Load ImageNet weights from ``$LEAFSCOPE_WEIGHTS_DIR/<key>.pth`` or fetch them."""
    cache = os.environ.get(WEIGHTS_ENV)
    if cache:
        path = Path(cache) / f"{key}.pth"
        if path.is_file():
            state = torch.load(path, map_location="cpu", weights_only=True)
            model.load_state_dict(state)
            return
        if os.environ.get("LEAFSCOPE_OFFLINE"):
            raise WeightsUnavailableError(f"pretrained weights not found at {path}")
        torch.hub.set_dir(cache)
    try:
        fetched = download()
    except Exception as exc:
        raise WeightsUnavailableError(
            f"pretrained weights for {key} are not cached and could not be fetched "
            f"(set {WEIGHTS_ENV} to a directory holding {key}.pth): {exc}"
        ) from exc
    model.load_state_dict(fetched.state_dict())
    if cache:
        torch.save(fetched.state_dict(), Path(cache) / f"{key}.pth")


@dataclass
class TapResult:
    logits: np.ndarray
    activations: dict
    gradients: dict


class ModelHandle:
    """A backbone plus its spec, a layer registry and pass counters.

    ``forward_passes`` counts images pushed through the network and
    ``backward_passes`` counts backward passes that reach the logits.
    """

    def __init__(self, module, spec, num_classes=NUM_CLASSES):
        self.module = module
        self.spec = spec
        self.num_classes = num_classes
        self.layers = dict(module.named_modules())
        self.forward_passes = 0
        self.backward_passes = 0
        if spec.default_cam_layer and spec.default_cam_layer not in self.layers:
            raise BackboneError(f"default CAM layer {spec.default_cam_layer!r} not in model")

    @property
    def dtype(self):
        return next(self.module.parameters()).dtype

    def _count_backward(self, grad):
        self.backward_passes += 1

    def run(self, x):
        """Call the module on an NCHW tensor, with pass accounting."""
        out = self.module(x)
        self.forward_passes += x.shape[0]
        if out.requires_grad:
            out.register_hook(self._count_backward)
        return out

    def to_input(self, batch):
        """Channels-last images (numpy or tensor) -> NCHW tensor of the model dtype."""
        x = torch.as_tensor(np.asarray(batch) if not torch.is_tensor(batch) else batch)
        if x.ndim == 3:
            x = x[None]
        side = self.spec.input_side
        if x.ndim != 4 or x.shape[1:] != (side, side, 3):
            raise BackboneError(
                f"expected a batch of {side}x{side}x3 images, got shape {tuple(x.shape)}"
            )
        return x.permute(0, 3, 1, 2).to(self.dtype).contiguous()

    def forward(self, batch):
        """Pre-softmax logits (``B x num_classes``) in eval mode."""
        self.module.eval()
        with torch.no_grad():
            return self.run(self.to_input(batch)).numpy()

    def forward_with_taps(self, batch, layers, class_index):
        """Forward pass capturing activations at ``layers`` and the gradient of
        the batch-summed ``class_index`` logit with respect to each of them.
        """
        if not 0 <= class_index < self.num_classes:
            raise BackboneError(f"class index {class_index} out of range")
        missing = [name for name in layers if name not in self.layers]
        if missing:
            raise BackboneError(f"unknown layer(s): {', '.join(missing)}")

        captured = {}

        def make_hook(name):
            def hook(module, inputs, output):
                if not torch.is_tensor(output) or output.ndim != 4:
                    raise BackboneError(f"layer {name!r} does not produce a 4-D activation")
                captured[name] = output
                # downstream in-place ops must not touch the captured tensor
                return output.clone()
            return hook

        handles = [self.layers[name].register_forward_hook(make_hook(name)) for name in layers]
        self.module.eval()
        try:
            with torch.enable_grad():
                logits = self.run(self.to_input(batch))
                grads = torch.autograd.grad(
                    logits[:, class_index].sum(), [captured[n] for n in layers]
                )
        finally:
            for h in handles:
                h.remove()

        return TapResult(
            logits=logits.detach().numpy(),
            activations={n: captured[n].detach().permute(0, 2, 3, 1).numpy() for n in layers},
            gradients={n: g.permute(0, 2, 3, 1).numpy() for n, g in zip(layers, grads)},
        )

    def softmax(self, batch):
        logits = torch.from_numpy(self.forward(batch))
        return torch.softmax(logits.double(), dim=1).numpy()


def build_model(spec, num_classes=NUM_CLASSES):
    """Build ``spec.name`` with a freshly initialised ``num_classes``-way linear head.

    All layers stay trainable.
    """
    if isinstance(spec, str):
        spec = default_spec(spec)
    if spec.name not in ARCHITECTURES:
        raise BackboneError(f"unknown architecture {spec.name!r}")
    if num_classes < 2:
        raise BackboneError("num_classes must be at least 2")
    builder, _, default_layer = ARCHITECTURES[spec.name]
    if not spec.default_cam_layer:
        spec = replace(spec, default_cam_layer=default_layer)
    module = builder(num_classes, spec.pretrained)
    for p in module.parameters():
        p.requires_grad_(True)
    return ModelHandle(module, spec, num_classes)


def save_checkpoint(model, path, epoch=None, val_accuracy=None, state=None):
    """Write ``path`` (parameter state) and its ``.meta.json`` sidecar."""
    path = Path(path)
    torch.save(state if state is not None else model.module.state_dict(), path)
    meta = {
        "architecture": model.spec.name,
        "num_classes": model.num_classes,
        "input_side": model.spec.input_side,
        "epoch": epoch,
        "val_accuracy": val_accuracy,
    }
    sidecar = path.with_suffix(".meta.json")
    sidecar.write_text(json.dumps(meta, indent=2) + "\n")
    return sidecar


def load_checkpoint(path):
    """Rebuild the model described by the sidecar and load its parameters."""
    path = Path(path)
    sidecar = path.with_suffix(".meta.json")
    if not path.is_file():
        raise BackboneError(f"checkpoint not found: {path}")
    if not sidecar.is_file():
        raise BackboneError(f"checkpoint sidecar not found: {sidecar}")
    meta = json.loads(sidecar.read_text())
    spec = replace(default_spec(meta["architecture"], pretrained=False),
                   input_side=meta["input_side"])
    model = build_model(spec, meta["num_classes"])
    model.module.load_state_dict(torch.load(path, map_location="cpu", weights_only=True))
    model.module.eval()
    return model, meta
