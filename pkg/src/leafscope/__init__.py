"""Explainable pumpkin-leaf disease classification."""

__version__ = "0.1.0"

from .dataset import ClassLabel, DatasetManifest, ingest_directory, stratified_split, validate_manifest
from .preprocess import AugmentationConfig, augment, load_and_resize, normalize
from .backbones import BackboneSpec, ModelHandle, build_model, default_spec, load_checkpoint
from .metrics import EvalReport, confusion_matrix, evaluate, render_reports
from .cam import grad_cam, grad_cam_pp, layer_cam, score_cam, overlay, explain
from .trainer import TrainConfig, TrainLog, train, run_grid, select_best, reference_grid
