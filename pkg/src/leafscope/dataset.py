"""Corpus ingestion, stratified splitting and manifest integrity checks.

A manifest is the single record of which image belongs to which class and
split.  Paths inside it are POSIX-style and relative to the corpus root.
"""

import hashlib
import json
import math
import os
import re
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from enum import IntEnum
from pathlib import Path

import numpy as np

from .errors import LeafscopeError

IMAGE_EXTENSIONS = (".jpg", ".jpeg", ".png")
SPLITS = ("train", "val", "test")
DEFAULT_RATIOS = (0.8, 0.1, 0.1)

_EPS = 1e-9


class DatasetError(LeafscopeError):
    pass


class ClassLabel(IntEnum):
    BacterialLeafSpot = 0
    DownyMildew = 1
    HealthyLeaf = 2
    MosaicDisease = 3
    PowderyMildew = 4

    @classmethod
    def from_name(cls, name):
        """Resolve a directory or label name, ignoring case, spaces, ``_`` and ``-``."""
        key = _fold(name)
        for label in cls:
            if _fold(label.name) == key:
                return label
        raise DatasetError(f"unknown class directory {name!r}")


CLASS_NAMES = [label.name for label in ClassLabel]


def _fold(name):
    return re.sub(r"[\s_\-]+", "", name).lower()


@dataclass(frozen=True)
class ManifestEntry:
    image_path: str
    label: ClassLabel
    split: str | None = None
    content_hash: str = ""


@dataclass(frozen=True)
class DatasetManifest:
    entries: tuple
    root: Path
    seed: int | None = None
    ratios: tuple | None = None

    def __post_init__(self):
        object.__setattr__(self, "root", Path(self.root))
        object.__setattr__(self, "entries", tuple(self.entries))

    def __len__(self):
        return len(self.entries)

    def split_entries(self, split):
        return [e for e in self.entries if e.split == split]

    def counts(self):
        """Return ``{(label, split): n}`` over all entries."""
        out = {}
        for e in self.entries:
            out[(e.label, e.split)] = out.get((e.label, e.split), 0) + 1
        return out

    def resolve(self, entry):
        return self.root / entry.image_path

    # -- JSON -----------------------------------------------------------

    def to_json(self, base_dir=None):
        root = self.root
        if base_dir is not None:
            root = Path(os.path.relpath(self.root, base_dir))
        doc = {
            "seed": self.seed,
            "ratios": list(self.ratios) if self.ratios is not None else None,
            "root": root.as_posix(),
            "entries": [
                {
                    "path": e.image_path,
                    "label": e.label.name,
                    "split": e.split,
                    "sha256": e.content_hash,
                }
                for e in self.entries
            ],
        }
        return json.dumps(doc, indent=2) + "\n"

    @classmethod
    def from_json(cls, text, base_dir=None):
        doc = json.loads(text)
        for key in ("seed", "ratios", "entries"):
            if key not in doc:
                raise DatasetError(f"manifest is missing key {key!r}")
        root = Path(doc.get("root", "."))
        if base_dir is not None and not root.is_absolute():
            root = Path(base_dir) / root
        entries = tuple(
            ManifestEntry(
                image_path=item["path"],
                label=ClassLabel.from_name(item["label"]),
                split=item.get("split"),
                content_hash=item.get("sha256", ""),
            )
            for item in doc["entries"]
        )
        ratios = tuple(doc["ratios"]) if doc["ratios"] is not None else None
        return cls(entries=entries, root=root, seed=doc["seed"], ratios=ratios)

    def save(self, path):
        path = Path(path)
        path.write_text(self.to_json(base_dir=path.parent.resolve()))

    @classmethod
    def load(cls, path):
        path = Path(path)
        if not path.is_file():
            raise DatasetError(f"manifest not found: {path}")
        return cls.from_json(path.read_text(), base_dir=path.parent.resolve())


def sha256_file(path, chunk_size=1 << 16):
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(chunk_size), b""):
            h.update(chunk)
    return h.hexdigest()


def ingest_directory(root, workers=None):
    """Scan a class-per-directory corpus into an unsplit manifest.

    Every ``.jpg``/``.jpeg``/``.png`` file below each class directory is
    listed.  Entries are sorted by ``(label index, path)`` so the result
    does not depend on filesystem enumeration order.
    """
    root = Path(root).resolve()
    if not root.is_dir():
        raise DatasetError(f"corpus root is not a directory: {root}")

    found = []
    for sub in sorted(p for p in root.iterdir() if p.is_dir()):
        try:
            label = ClassLabel.from_name(sub.name)
        except DatasetError:
            raise DatasetError(f"unknown class directory {sub.name!r} in {root}") from None
        files = sorted(
            p for p in sub.rglob("*")
            if p.is_file() and p.suffix.lower() in IMAGE_EXTENSIONS
        )
        if not files:
            raise DatasetError(f"class directory {sub.name!r} contains no images")
        found.extend((label, p) for p in files)

    if not found:
        raise DatasetError(f"no class directories found in {root}")

    unreadable = [str(p) for _, p in found if not os.access(p, os.R_OK)]
    if unreadable:
        raise DatasetError("unreadable image files: " + ", ".join(unreadable))

    with ThreadPoolExecutor(max_workers=workers) as pool:
        hashes = list(pool.map(sha256_file, [p for _, p in found]))

    entries = [
        ManifestEntry(p.relative_to(root).as_posix(), label, None, digest)
        for (label, p), digest in zip(found, hashes)
    ]
    entries.sort(key=lambda e: (int(e.label), e.image_path))
    return DatasetManifest(entries=tuple(entries), root=root)


def split_sizes(n, ratios):
    """Per-class split sizes: train is rounded half-up, val absorbs the remainder."""
    r_train, _, r_test = ratios
    n_train = min(n, math.floor(r_train * n + 0.5 + _EPS))
    rest = n - n_train
    n_test = min(rest, math.floor(r_test * n + _EPS))
    return n_train, rest - n_test, n_test


def _check_ratios(ratios):
    ratios = tuple(float(r) for r in ratios)
    if len(ratios) != 3 or any(r < 0 for r in ratios):
        raise DatasetError(f"ratios must be three non-negative numbers, got {ratios}")
    if abs(sum(ratios) - 1.0) > _EPS:
        raise DatasetError(f"ratios must sum to 1, got {sum(ratios)!r}")
    return ratios


def stratified_split(manifest, ratios=DEFAULT_RATIOS, seed=0):
    """Assign train/val/test independently within each class.

    Each class is shuffled by a generator seeded with ``(seed, class index)``,
    so the result is a pure function of the entries, ratios and seed.
    """
    ratios = _check_ratios(ratios)
    if seed < 0:
        raise DatasetError("seed must be a non-negative integer")

    by_class = {}
    for e in manifest.entries:
        by_class.setdefault(e.label, []).append(e)

    assigned = {}
    for label, members in sorted(by_class.items()):
        if len(members) < 3:
            raise DatasetError(
                f"class {label.name} has {len(members)} entries; at least 3 are required"
            )
        members = sorted(members, key=lambda e: e.image_path)
        order = np.random.default_rng([seed, int(label)]).permutation(len(members))
        n_train, n_val, _ = split_sizes(len(members), ratios)
        for rank, idx in enumerate(order):
            split = "train" if rank < n_train else "val" if rank < n_train + n_val else "test"
            assigned[members[idx].image_path] = split

    entries = tuple(replace(e, split=assigned[e.image_path]) for e in manifest.entries)
    return replace(manifest, entries=entries, seed=int(seed), ratios=ratios)


@dataclass
class Finding:
    kind: str
    path: str
    detail: str = ""


@dataclass
class ValidationReport:
    findings: list = field(default_factory=list)

    def __bool__(self):
        return bool(self.findings)

    def __len__(self):
        return len(self.findings)

    def of_kind(self, kind):
        return [f for f in self.findings if f.kind == kind]

    def add(self, kind, path, detail=""):
        self.findings.append(Finding(kind, path, detail))


def validate_manifest(manifest, check_hashes=True):
    """Collect every integrity problem instead of raising.

    Finding kinds: ``missing-file``, ``hash-mismatch``, ``duplicate-path``,
    ``split-overlap``, ``unassigned-split``, ``bad-ratios``, ``split-size``.
    """
    report = ValidationReport()

    seen = {}
    for e in manifest.entries:
        if e.image_path in seen:
            if seen[e.image_path] != e.split:
                report.add("split-overlap", e.image_path,
                           f"listed in both {seen[e.image_path]} and {e.split}")
            else:
                report.add("duplicate-path", e.image_path)
            continue
        seen[e.image_path] = e.split

        path = manifest.resolve(e)
        if not path.is_file():
            report.add("missing-file", e.image_path)
        elif check_hashes and e.content_hash and sha256_file(path) != e.content_hash:
            report.add("hash-mismatch", e.image_path)
        if e.split not in SPLITS:
            report.add("unassigned-split", e.image_path, f"split={e.split!r}")

    if manifest.ratios is None:
        return report
    try:
        ratios = _check_ratios(manifest.ratios)
    except DatasetError as exc:
        report.add("bad-ratios", "", str(exc))
        return report

    counts = manifest.counts()
    for label in sorted({e.label for e in manifest.entries}):
        got = tuple(counts.get((label, s), 0) for s in SPLITS)
        want = split_sizes(sum(got), ratios)
        if got != want:
            report.add("split-size", label.name, f"sizes {got}, expected {want}")
    return report
