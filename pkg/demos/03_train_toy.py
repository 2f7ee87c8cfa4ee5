"""
Fine-tuning a tiny network
==========================

The ``toy`` backbone is a two-layer convolutional net that trains in
seconds on a CPU.  Swap in ``ResNet50`` or another architecture name for a
real run.
"""

import tempfile
from pathlib import Path

from leafscope import fixtures
from leafscope.dataset import ingest_directory, stratified_split
from leafscope.trainer import TrainConfig, evaluate_split, model_for, train, write_run

manifest = stratified_split(ingest_directory(fixtures.fixture_root()), (0.6, 0.2, 0.2), seed=0)
config = TrainConfig(architecture="toy", epochs=20, batch_size=4, learning_rate=1e-2,
                     preprocess_side=64, seed=0)

model = model_for(config)
checkpoint, log = train(model, manifest, config)
for r in log.records:
    print(f"epoch {r['epoch']}  train {r['train_loss']:.3f}  val acc {r['val_accuracy']:.2f}")
print("kept epoch", checkpoint.epoch)

###############################################################################
# The model now holds the best-validation weights.  Evaluate it on the
# held-out split and write a run directory.

report = evaluate_split(model, manifest, "test")
print(f"test accuracy {report.accuracy:.2f}")
run = write_run(Path(tempfile.mkdtemp()) / "toy", model, checkpoint, log)
print(sorted(p.name for p in run.iterdir()))
