"""Fine-tuning over a hyperparameter grid with best-validation checkpointing."""

import copy
import itertools
import json
import logging
import math
import platform
import time
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path

import numpy as np
import torch
from torch import nn

from .backbones import build_model, default_spec, save_checkpoint
from .dataset import DatasetManifest
from .errors import LeafscopeError
from .metrics import confusion_matrix, evaluate
from .preprocess import PREPROCESS_SIDE, AugmentationConfig, augment, load_and_resize, resize_image

log = logging.getLogger(__name__)

REFERENCE_EPOCHS = (30, 50, 100)
REFERENCE_BATCH_SIZES = (6, 8, 10, 12)
REFERENCE_LEARNING_RATES = (1e-3, 1e-5)


class TrainingError(LeafscopeError):
    pass


class DivergenceError(TrainingError):
    pass


@dataclass(frozen=True)
class TrainConfig:
    architecture: str = "ResNet50"
    epochs: int = 50
    batch_size: int = 10
    learning_rate: float = 1e-5
    seed: int = 0
    augmentation: AugmentationConfig = field(default_factory=AugmentationConfig)
    manifest_path: str | None = None
    pretrained: bool | None = None
    preprocess_side: int = PREPROCESS_SIDE
    deterministic: bool = True
    # a batch loss above this counts as divergence; None disables the check
    max_loss: float | None = 1e6

    def __post_init__(self):
        if isinstance(self.augmentation, dict):
            object.__setattr__(self, "augmentation", AugmentationConfig.from_dict(self.augmentation))
        if self.epochs < 1:
            raise TrainingError("epochs must be >= 1")
        if self.batch_size < 1:
            raise TrainingError("batch_size must be >= 1")
        if not self.learning_rate > 0:
            raise TrainingError("learning_rate must be > 0")

    def to_dict(self):
        d = asdict(self)
        d["augmentation"] = self.augmentation.to_dict()
        return d

    @classmethod
    def from_dict(cls, d):
        known = set(cls.__dataclass_fields__)
        unknown = set(d) - known
        if unknown:
            raise TrainingError(f"unknown config keys: {sorted(unknown)}")
        return cls(**d)

    @classmethod
    def load(cls, path):
        path = Path(path)
        if not path.is_file():
            raise TrainingError(f"config not found: {path}")
        cfg = cls.from_dict(json.loads(path.read_text()))
        if cfg.manifest_path and not Path(cfg.manifest_path).is_absolute():
            cfg = replace(cfg, manifest_path=str(path.parent / cfg.manifest_path))
        return cfg

    @property
    def label(self):
        return f"{self.architecture}_e{self.epochs}_b{self.batch_size}_lr{self.learning_rate:g}"


@dataclass
class TrainLog:
    records: list
    config: dict
    environment: dict
    epoch_seconds: list = field(default_factory=list)

    def to_dict(self):
        return asdict(self)

    @classmethod
    def from_dict(cls, d):
        return cls(**d)

    @property
    def best(self):
        """Record with the highest val_accuracy; the earliest epoch wins ties."""
        return max(self.records, key=lambda r: (r["val_accuracy"], -r["epoch"]))


@dataclass
class Checkpoint:
    state: dict
    architecture: str
    num_classes: int
    input_side: int
    epoch: int
    val_accuracy: float

    def save(self, path, model):
        return save_checkpoint(model, path, self.epoch, self.val_accuracy, state=self.state)


def environment_fingerprint():
    return {
        "python": platform.python_version(),
        "torch": torch.__version__,
        "numpy": np.__version__,
        "platform": platform.platform(),
        "threads": torch.get_num_threads(),
    }


def _set_determinism(config):
    torch.manual_seed(config.seed)
    if config.deterministic:
        torch.set_num_threads(1)
        torch.use_deterministic_algorithms(True, warn_only=True)


def load_split(manifest, split, side):
    """Images of ``split`` at ``side`` pixels plus integer labels."""
    entries = manifest.split_entries(split)
    if not entries:
        return np.zeros((0, side, side, 3), np.float32), np.zeros(0, np.int64)
    images = np.stack([load_and_resize(manifest.resolve(e), side) for e in entries])
    labels = np.array([int(e.label) for e in entries], dtype=np.int64)
    return images, labels


def predict(model, images, batch_size=32):
    out = []
    for start in range(0, len(images), batch_size):
        out.append(model.forward(images[start:start + batch_size]))
    return np.concatenate(out) if out else np.zeros((0, model.num_classes))


def _eval_split(model, images, labels):
    logits = predict(model, images)
    with torch.no_grad():
        loss = nn.functional.cross_entropy(torch.from_numpy(logits).double(),
                                           torch.from_numpy(labels)).item()
    acc = float((logits.argmax(axis=1) == labels).mean())
    return loss, acc, logits


def evaluate_split(model, manifest, split="test"):
    """Metric report of ``model`` on one split of ``manifest``."""
    images, labels = load_split(manifest, split, model.spec.input_side)
    if len(labels) == 0:
        raise TrainingError(f"split {split!r} is empty")
    preds = predict(model, images).argmax(axis=1)
    cm = confusion_matrix(preds, labels, model.num_classes)
    return evaluate(cm, architecture=model.spec.name)


def train(model, manifest, config):
    """Train for ``config.epochs`` epochs and keep the best-validation state.

    Returns ``(Checkpoint, TrainLog)``.  Validation runs in eval mode after
    every epoch; the checkpoint is the epoch with the highest val_accuracy
    (earliest on ties).
    """
    _set_determinism(config)
    side = model.spec.input_side
    train_entries = manifest.split_entries("train")
    if not train_entries:
        raise TrainingError("train split is empty")
    val_images, val_labels = load_split(manifest, "val", side)
    if len(val_labels) == 0:
        raise TrainingError("val split is empty")

    pre_side = max(config.preprocess_side, side)
    train_base = [load_and_resize(manifest.resolve(e), pre_side) for e in train_entries]
    train_labels = np.array([int(e.label) for e in train_entries], dtype=np.int64)

    module = model.module
    optimizer = torch.optim.Adam(module.parameters(), lr=config.learning_rate)
    loss_fn = nn.CrossEntropyLoss()
    rng = np.random.default_rng(config.seed)

    records, seconds = [], []
    best_state, best_record = None, None
    for epoch in range(1, config.epochs + 1):
        started = time.perf_counter()
        module.train()
        order = rng.permutation(len(train_base))
        losses = []
        for b, start in enumerate(range(0, len(order), config.batch_size), start=1):
            idx = order[start:start + config.batch_size]
            batch = np.stack([resize_image(augment(train_base[i], config.augmentation, rng), side)
                              for i in idx])
            x = model.to_input(batch)
            y = torch.from_numpy(train_labels[idx])
            optimizer.zero_grad()
            loss = loss_fn(model.run(x), y)
            if not torch.isfinite(loss):
                raise DivergenceError(f"non-finite loss at epoch {epoch}, batch {b}")
            if config.max_loss is not None and loss.item() > config.max_loss:
                raise DivergenceError(
                    f"loss {loss.item():.3g} exceeds {config.max_loss:g} at epoch {epoch}, batch {b}"
                )
            loss.backward()
            optimizer.step()
            losses.append(loss.item())

        val_loss, val_acc, _ = _eval_split(model, val_images, val_labels)
        if not math.isfinite(val_loss):
            raise DivergenceError(f"non-finite validation loss at epoch {epoch}")
        record = {
            "epoch": epoch,
            "train_loss": float(np.mean(losses)),
            "val_loss": val_loss,
            "val_accuracy": val_acc,
        }
        records.append(record)
        seconds.append(time.perf_counter() - started)
        log.info("epoch %d train_loss %.4f val_loss %.4f val_acc %.4f",
                 epoch, record["train_loss"], val_loss, val_acc)
        if best_record is None or val_acc > best_record["val_accuracy"]:
            best_record = record
            best_state = copy.deepcopy(module.state_dict())

    module.load_state_dict(best_state)
    checkpoint = Checkpoint(
        state=best_state,
        architecture=model.spec.name,
        num_classes=model.num_classes,
        input_side=side,
        epoch=best_record["epoch"],
        val_accuracy=best_record["val_accuracy"],
    )
    train_log = TrainLog(records, config.to_dict(), environment_fingerprint(), seconds)
    return checkpoint, train_log


def write_run(run_dir, model, checkpoint, train_log):
    """Lay out ``config.json``, ``log.json``, ``best.ckpt`` and ``best.meta.json``."""
    run_dir = Path(run_dir)
    run_dir.mkdir(parents=True, exist_ok=True)
    (run_dir / "config.json").write_text(json.dumps(train_log.config, indent=2) + "\n")
    (run_dir / "log.json").write_text(json.dumps(train_log.to_dict(), indent=2) + "\n")
    checkpoint.save(run_dir / "best.ckpt", model)
    return run_dir


def reference_grid(base=None):
    """The 3 x 4 x 2 grid of epochs, batch sizes and learning rates (24 configs)."""
    base = base or TrainConfig()
    return [
        replace(base, epochs=e, batch_size=b, learning_rate=lr)
        for e, b, lr in itertools.product(REFERENCE_EPOCHS, REFERENCE_BATCH_SIZES, REFERENCE_LEARNING_RATES)
    ]


def model_for(config):
    """Build the backbone named by ``config``; the fresh head is seeded by ``config.seed``."""
    torch.manual_seed(config.seed)
    spec = default_spec(config.architecture, config.pretrained)
    return build_model(spec)


@dataclass
class GridRow:
    config: TrainConfig
    status: str
    best_val_accuracy: float | None = None
    best_epoch: int | None = None
    test: dict | None = None
    error: str | None = None
    log: TrainLog | None = None

    def to_dict(self):
        return {
            "config": self.config.to_dict(),
            "status": self.status,
            "best_val_accuracy": self.best_val_accuracy,
            "best_epoch": self.best_epoch,
            "test": self.test,
            "error": self.error,
        }


@dataclass
class GridReport:
    rows: list

    def to_dict(self):
        return {"rows": [r.to_dict() for r in self.rows]}


def run_grid(model_factory, manifest, grid, run_root=None):
    """Train every config in ``grid`` in turn.

    A failing cell is recorded with ``status="failed"`` and the grid carries
    on.  Rows come back sorted by best val_accuracy, failed cells last.
    """
    grid = list(grid)
    if not grid:
        raise TrainingError("grid is empty")
    rows = []
    for config in grid:
        try:
            model = model_factory(config)
            checkpoint, train_log = train(model, manifest, config)
            test = None
            if manifest.split_entries("test"):
                test = evaluate_split(model, manifest, "test").to_dict()
            if run_root is not None:
                run_dir = write_run(Path(run_root) / config.label, model, checkpoint, train_log)
                if test is not None:
                    (run_dir / "report.json").write_text(json.dumps(test, indent=2) + "\n")
            rows.append(GridRow(config, "ok", checkpoint.val_accuracy, checkpoint.epoch,
                                test, log=train_log))
        except Exception as exc:
            log.warning("grid cell %s failed: %s", config.label, exc)
            rows.append(GridRow(config, "failed", error=f"{type(exc).__name__}: {exc}"))
    rows.sort(key=lambda r: (r.status != "ok", -(r.best_val_accuracy or 0.0)))
    return GridReport(rows)


def select_best(logs):
    """Best ``(config, epoch)`` over several training logs.

    Ties on val_accuracy go to fewer epochs, then smaller batch, then smaller
    learning rate.
    """
    logs = list(logs)
    if not logs:
        raise TrainingError("no logs to select from")

    def key(train_log):
        best = train_log.best
        cfg = train_log.config
        return (-best["val_accuracy"], cfg["epochs"], cfg["batch_size"], cfg["learning_rate"])

    winner = min(logs, key=key)
    return TrainConfig.from_dict(winner.config), winner.best["epoch"]


def load_manifest_for(config):
    if not config.manifest_path:
        raise TrainingError("config has no manifest_path")
    return DatasetManifest.load(config.manifest_path)
