"""
Ingesting a corpus and splitting it
===================================

A corpus is a directory with one sub-directory per class.  Ingestion hashes
every image and records it in a manifest; splitting assigns each entry to
train, val or test within its own class.
"""

import tempfile
from pathlib import Path

from leafscope import fixtures
from leafscope.dataset import DatasetManifest, ingest_directory, stratified_split, validate_manifest

# the bundled fixture has five 64x64 images per class
root = fixtures.fixture_root()
manifest = ingest_directory(root)
print(len(manifest), "images")

# with only five per class, 0.6/0.2/0.2 leaves one image each for val and test
split = stratified_split(manifest, ratios=(0.6, 0.2, 0.2), seed=0)
for (label, part), n in sorted(split.counts().items()):
    print(f"{label.name:18s} {part:5s} {n}")

###############################################################################
# The manifest round-trips through JSON, and the same seed always yields
# the same bytes.

out = Path(tempfile.mkdtemp()) / "manifest.json"
split.save(out)
again = stratified_split(manifest, ratios=(0.6, 0.2, 0.2), seed=0)
print(again.to_json(out.parent) == out.read_text())

###############################################################################
# Validation collects problems rather than raising on the first one.

reloaded = DatasetManifest.load(out)
print("findings:", validate_manifest(reloaded).findings)
