"""Confusion matrices and support-weighted accuracy/precision/recall/F1.

Rows of a confusion matrix are true classes, columns are predictions.
"""

import json
import math
import warnings
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .dataset import CLASS_NAMES
from .errors import LeafscopeError


class MetricsError(LeafscopeError):
    pass


def confusion_matrix(predictions, labels, num_classes=len(CLASS_NAMES)):
    predictions = np.asarray(predictions, dtype=np.int64).ravel()
    labels = np.asarray(labels, dtype=np.int64).ravel()
    if predictions.shape != labels.shape:
        raise MetricsError(
            f"length mismatch: {predictions.size} predictions vs {labels.size} labels"
        )
    if labels.size == 0:
        raise MetricsError("need at least one sample")
    for name, arr in (("prediction", predictions), ("label", labels)):
        if arr.min() < 0 or arr.max() >= num_classes:
            raise MetricsError(f"{name} index out of range 0..{num_classes - 1}")
    counts = np.zeros((num_classes, num_classes), dtype=np.int64)
    np.add.at(counts, (labels, predictions), 1)
    return counts


@dataclass
class EvalReport:
    accuracy: float
    precision: float
    recall: float
    f1: float
    per_class: dict
    confusion: np.ndarray
    architecture: str | None = None
    extra: dict = field(default_factory=dict)

    def to_dict(self):
        return {
            "architecture": self.architecture,
            "accuracy": self.accuracy,
            "precision": self.precision,
            "recall": self.recall,
            "f1": self.f1,
            "per_class": self.per_class,
            "confusion": self.confusion.tolist(),
        }

    @classmethod
    def from_dict(cls, d):
        return cls(
            accuracy=d["accuracy"],
            precision=d["precision"],
            recall=d["recall"],
            f1=d["f1"],
            per_class=d.get("per_class", {}),
            confusion=np.asarray(d.get("confusion", []), dtype=np.int64),
            architecture=d.get("architecture"),
        )


def _ratio(num, den, what, name):
    if den == 0:
        warnings.warn(f"{what} of class {name} is undefined (no samples); using 0", stacklevel=3)
        return 0.0
    return num / den


def evaluate(cm, class_names=None, architecture=None):
    """Per-class and support-weighted metrics from a confusion matrix.

    Undefined per-class precision or recall (empty column or row) counts as
    0 and emits a warning.
    """
    cm = np.asarray(cm, dtype=np.int64)
    if cm.ndim != 2 or cm.shape[0] != cm.shape[1]:
        raise MetricsError(f"confusion matrix must be square, got shape {cm.shape}")
    total = int(cm.sum())
    if total == 0:
        raise MetricsError("confusion matrix is all zero")
    k = cm.shape[0]
    if class_names is None:
        class_names = CLASS_NAMES if k == len(CLASS_NAMES) else [str(i) for i in range(k)]

    rows = cm.sum(axis=1)
    cols = cm.sum(axis=0)
    per_class = {}
    terms = {"precision": [], "recall": [], "f1": []}
    for c, name in enumerate(class_names):
        tp, support = int(cm[c, c]), int(rows[c])
        p = _ratio(tp, int(cols[c]), "precision", name)
        r = _ratio(tp, support, "recall", name)
        f = 2 * p * r / (p + r) if p + r > 0 else 0.0
        per_class[name] = {"precision": p, "recall": r, "f1": f, "support": support}
        terms["precision"].append(support * p)
        terms["recall"].append(support * r)
        terms["f1"].append(support * f)

    weighted = {k: min(1.0, math.fsum(v) / total) for k, v in terms.items()}
    return EvalReport(
        accuracy=int(np.trace(cm)) / total,
        precision=weighted["precision"],
        recall=weighted["recall"],
        f1=weighted["f1"],
        per_class=per_class,
        confusion=cm,
        architecture=architecture,
    )


def rank_reports(reports):
    """``(name, report)`` pairs by accuracy descending, ties alphabetical."""
    return sorted(reports.items(), key=lambda kv: (-kv[1].accuracy, kv[0]))


def comparison_table(reports):
    return [
        {
            "architecture": name,
            "accuracy": r.accuracy,
            "precision": r.precision,
            "recall": r.recall,
            "f1": r.f1,
        }
        for name, r in rank_reports(reports)
    ]


def plot_confusion(cm, class_names, title, path):
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    cm = np.asarray(cm)
    fig, ax = plt.subplots(figsize=(6, 5))
    im = ax.imshow(cm, cmap="Blues")
    ax.set_xticks(range(len(class_names)), class_names, rotation=45, ha="right")
    ax.set_yticks(range(len(class_names)), class_names)
    ax.set_xlabel("Predicted")
    ax.set_ylabel("True")
    ax.set_title(title)
    thresh = cm.max() / 2 if cm.size else 0
    for i in range(cm.shape[0]):
        for j in range(cm.shape[1]):
            ax.text(j, i, int(cm[i, j]), ha="center", va="center",
                    color="white" if cm[i, j] > thresh else "black")
    fig.colorbar(im, ax=ax)
    fig.tight_layout()
    fig.savefig(path, dpi=100)
    plt.close(fig)


def render_reports(reports, out_dir):
    """Write ``comparison.json`` and one ``confusion_<name>.png`` per report.

    Returns the table rows as written.
    """
    if not reports:
        raise MetricsError("no reports to render")
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    table = comparison_table(reports)
    (out_dir / "comparison.json").write_text(json.dumps(table, indent=2) + "\n")
    for name, report in reports.items():
        cm = np.asarray(report.confusion)
        if cm.size == 0:
            continue
        names = list(report.per_class) or [str(i) for i in range(cm.shape[0])]
        plot_confusion(cm, names, name, out_dir / f"confusion_{name}.png")
    return table
