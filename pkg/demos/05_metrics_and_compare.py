"""
Comparing architectures
=======================

Metrics are averaged over classes with weights proportional to class
support, so weighted recall always equals accuracy.
"""

import tempfile

import numpy as np

from leafscope.metrics import confusion_matrix, evaluate, render_reports

rng = np.random.default_rng(0)
labels = rng.integers(0, 5, 200)


def noisy(p_correct):
    wrong = rng.integers(0, 5, labels.size)
    return np.where(rng.random(labels.size) < p_correct, labels, wrong)


reports = {}
for name, p in [("ResNet50", 0.9), ("DenseNet121", 0.8), ("Xception", 0.85)]:
    reports[name] = evaluate(confusion_matrix(noisy(p), labels), architecture=name)
    r = reports[name]
    print(f"{name:12s} acc {r.accuracy:.3f} recall {r.recall:.3f} f1 {r.f1:.3f}")

###############################################################################
# ``render_reports`` ranks by accuracy and draws a confusion matrix per run.

out = tempfile.mkdtemp()
for row in render_reports(reports, out):
    print(row["architecture"], round(row["accuracy"], 3))
