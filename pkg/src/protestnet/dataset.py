"""Manifests of labelled images: ingestion, linting, splitting, synthesis.

A manifest is a UTF-8 JSON-lines file, one record per line::

    {"id": "a1", "path": "images/a1.png", "labels": "1000100",
     "provenance": {"kind": "original"}, "split": "train"}

Relative paths resolve against the manifest's directory.
"""
from __future__ import annotations

import dataclasses
import json
import math
import os
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np
from PIL import Image

from . import CLASS_NAMES, NUM_CLASSES, OTHER

SPLITS = ("unassigned", "train", "test")

# Published per-class sample sizes, used for full-scale stand-in manifests.
PUBLISHED_COUNTS = (327, 1943, 7347, 248, 2159, 4462, 1233)


class ManifestError(ValueError):
    """Malformed or inconsistent manifest content."""


@dataclass(frozen=True)
class LabelVector:
    bits: tuple[bool, ...]

    def __post_init__(self):
        if len(self.bits) != NUM_CLASSES:
            raise ValueError(f"label vector must have {NUM_CLASSES} bits, got {len(self.bits)}")
        object.__setattr__(self, "bits", tuple(bool(b) for b in self.bits))

    @classmethod
    def parse(cls, text: str) -> "LabelVector":
        if len(text) != NUM_CLASSES or set(text) - {"0", "1"}:
            raise ValueError(f"label string must be {NUM_CLASSES} chars of 0/1, got {text!r}")
        return cls(tuple(c == "1" for c in text))

    @classmethod
    def from_indices(cls, indices: Iterable[int]) -> "LabelVector":
        on = set(indices)
        return cls(tuple(i in on for i in range(NUM_CLASSES)))

    def __str__(self) -> str:
        return "".join("1" if b else "0" for b in self.bits)

    def __getitem__(self, j: int) -> bool:
        return self.bits[j]

    def as_array(self) -> np.ndarray:
        return np.array(self.bits, dtype=np.uint8)

    @property
    def other_exclusive(self) -> bool:
        return not self.bits[OTHER] or sum(self.bits) == 1


@dataclass(frozen=True)
class Provenance:
    """``transform`` is None for originals, else a serialized TransformSpec."""

    kind: str = "original"
    source_id: str | None = None
    transform: dict | None = None
    driver: int | None = None  # class index whose augmentation produced the record

    def __post_init__(self):
        if self.kind not in ("original", "augmented"):
            raise ValueError(f"unknown provenance kind {self.kind!r}")
        if self.kind == "augmented" and (self.source_id is None or self.transform is None):
            raise ValueError("augmented provenance needs source_id and transform")

    @property
    def is_original(self) -> bool:
        return self.kind == "original"

    @property
    def transform_name(self) -> str | None:
        return None if self.transform is None else self.transform["kind"]

    @property
    def seed(self) -> int | None:
        return None if self.transform is None else self.transform["seed"]

    def to_json(self) -> dict:
        if self.is_original:
            return {"kind": "original"}
        d = {"kind": "augmented", "source_id": self.source_id, "transform": self.transform}
        if self.driver is not None:
            d["driver"] = self.driver
        return d

    @classmethod
    def from_json(cls, d) -> "Provenance":
        if d in (None, "original") or d.get("kind") == "original":
            return cls()
        return cls("augmented", d["source_id"], d["transform"], d.get("driver"))


@dataclass(frozen=True)
class ImageRecord:
    id: str
    path: str
    labels: LabelVector
    provenance: Provenance = field(default_factory=Provenance)
    split: str = "unassigned"

    def __post_init__(self):
        if self.split not in SPLITS:
            raise ValueError(f"unknown split {self.split!r}")

    def to_json(self) -> dict:
        return {"id": self.id, "path": self.path, "labels": str(self.labels),
                "provenance": self.provenance.to_json(), "split": self.split}

    @classmethod
    def from_json(cls, d: dict) -> "ImageRecord":
        return cls(id=str(d["id"]), path=str(d.get("path", "")), labels=LabelVector.parse(str(d["labels"])),
                   provenance=Provenance.from_json(d.get("provenance")), split=d.get("split", "unassigned"))


@dataclass(frozen=True)
class DatasetManifest:
    records: tuple[ImageRecord, ...] = ()
    root: str = "."

    def __post_init__(self):
        object.__setattr__(self, "records", tuple(self.records))
        seen = set()
        for r in self.records:
            if r.id in seen:
                raise ManifestError(f"duplicate id {r.id!r}")
            seen.add(r.id)
        for r in self.records:
            p = r.provenance
            if not p.is_original and p.source_id not in seen:
                raise ManifestError(f"record {r.id!r} references unknown source {p.source_id!r}")

    def __len__(self) -> int:
        return len(self.records)

    def __eq__(self, other) -> bool:
        return isinstance(other, DatasetManifest) and self.records == other.records

    @property
    def class_counts(self) -> list[int]:
        return class_counts(self)

    def by_id(self) -> dict[str, ImageRecord]:
        return {r.id: r for r in self.records}

    def label_matrix(self) -> np.ndarray:
        if not self.records:
            return np.zeros((0, NUM_CLASSES), dtype=np.uint8)
        return np.stack([r.labels.as_array() for r in self.records])

    def subset(self, split: str) -> "DatasetManifest":
        """Records of one split, plus the sources their augmentations reference."""
        keep = [r for r in self.records if r.split == split]
        ids = {r.id for r in keep}
        need = {r.provenance.source_id for r in keep if not r.provenance.is_original} - ids
        extra = [r for r in self.records if r.id in need]
        if extra:
            # Keep source records present so regeneration works; they stay in their own split.
            keep = extra + keep
        return DatasetManifest(tuple(keep), self.root)

    def resolve(self, record: ImageRecord) -> Path:
        p = Path(record.path)
        return p if p.is_absolute() else Path(self.root) / p

    def replace(self, **kw) -> "DatasetManifest":
        return dataclasses.replace(self, **kw)


def class_counts(m: DatasetManifest | Sequence[ImageRecord]) -> list[int]:
    records = m.records if isinstance(m, DatasetManifest) else m
    counts = [0] * NUM_CLASSES
    for r in records:
        for j, b in enumerate(r.labels.bits):
            counts[j] += b
    return counts


def load_manifest(path) -> DatasetManifest:
    path = Path(path)
    if not path.is_file():
        raise FileNotFoundError(f"manifest not found: {path}")
    records = []
    with open(path, encoding="utf-8") as f:
        for lineno, line in enumerate(f, 1):
            if not line.strip():
                continue
            try:
                records.append(ImageRecord.from_json(json.loads(line)))
            except (ValueError, KeyError, TypeError, AttributeError) as e:
                raise ManifestError(f"{path}:{lineno}: {e}") from e
    try:
        return DatasetManifest(tuple(records), str(path.parent))
    except ManifestError as e:
        raise ManifestError(f"{path}: {e}") from e


def save_manifest(m: DatasetManifest, path) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        for r in m.records:
            f.write(json.dumps(r.to_json(), sort_keys=True, separators=(",", ":")) + "\n")


@dataclass(frozen=True)
class Finding:
    record_id: str
    rule: str
    message: str


def lint_manifest(m: DatasetManifest) -> list[Finding]:
    findings = []
    ids = m.by_id()
    for r in m.records:
        if not r.labels.other_exclusive:
            findings.append(Finding(r.id, "other-exclusivity",
                                    f"labels {r.labels} set 'other' together with another attribute"))
        if r.path:
            target = m.resolve(r)
        elif not r.provenance.is_original and r.provenance.source_id in ids:
            target = m.resolve(ids[r.provenance.source_id])
        else:
            target = None
        if target is None or not os.access(target, os.R_OK) or not target.is_file():
            findings.append(Finding(r.id, "path", f"unreadable image path {str(target)!r}"))
    return findings


def train_size(n: int, train_fraction: float) -> int:
    # round half up; Python's round() is half-to-even
    return int(math.floor(train_fraction * n + 0.5))


def split(m: DatasetManifest, train_fraction: float, seed: int, stratify: bool = False) -> DatasetManifest:
    """Assign train/test by a seeded permutation; record order is kept."""
    if not 0.0 < train_fraction < 1.0:
        raise ValueError(f"train_fraction must be in (0, 1), got {train_fraction}")
    assigned = [r.id for r in m.records if r.split != "unassigned"]
    if assigned:
        raise ManifestError(f"{len(assigned)} records already assigned (first: {assigned[0]!r})")
    n = len(m.records)
    gen = np.random.default_rng(seed)
    if not stratify:
        order = gen.permutation(n)
        train = set(order[:train_size(n, train_fraction)].tolist())
    else:
        train = _stratified_train(m, train_fraction, gen)
    records = tuple(dataclasses.replace(r, split="train" if i in train else "test")
                    for i, r in enumerate(m.records))
    return m.replace(records=records)


def _stratified_train(m, train_fraction, gen) -> set[int]:
    # Strata are exact label strings; largest remainder keeps the total at round(f*N).
    groups: dict[str, list[int]] = {}
    for i, r in enumerate(m.records):
        groups.setdefault(str(r.labels), []).append(i)
    keys = sorted(groups)
    quotas = {k: train_fraction * len(groups[k]) for k in keys}
    take = {k: int(math.floor(q)) for k, q in quotas.items()}
    short = train_size(len(m.records), train_fraction) - sum(take.values())
    for k in sorted(keys, key=lambda k: (-(quotas[k] - take[k]), k))[:max(short, 0)]:
        take[k] += 1
    train = set()
    for k in keys:
        idx = np.asarray(groups[k])
        train.update(idx[gen.permutation(len(idx))[:take[k]]].tolist())
    return train


# ---------------------------------------------------------------- synthesis

CLASS_COLORS = np.array([
    [0.95, 0.35, 0.05],  # fire
    [0.10, 0.30, 0.95],  # flag
    [0.95, 0.90, 0.10],  # large_crowd
    [0.60, 0.10, 0.60],  # other
    [0.05, 0.10, 0.25],  # police
    [0.98, 0.98, 0.98],  # sign
    [0.10, 0.80, 0.20],  # student
])
# home cell (row, col) of each class's shape in a 3x3 grid right of the colour bands
_CELLS = ((0, 0), (0, 1), (0, 2), (1, 1), (2, 0), (2, 1), (2, 2))


@dataclass(frozen=True)
class SyntheticSpec:
    per_class_count: tuple[int, ...] = (70,) * NUM_CLASSES
    image_side: int = 32
    co_label_probability: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "per_class_count", tuple(int(c) for c in self.per_class_count))
        if len(self.per_class_count) != NUM_CLASSES:
            raise ValueError(f"per_class_count needs {NUM_CLASSES} entries")
        if min(self.per_class_count) < 0:
            raise ValueError("per_class_count must be non-negative")
        if self.image_side < 8:
            raise ValueError("image_side must be at least 8")
        if not 0.0 <= self.co_label_probability <= 1.0:
            raise ValueError("co_label_probability must lie in [0, 1]")


def _shape_mask(kind: int, side: int, cy: float, cx: float, r: float) -> np.ndarray:
    yy, xx = np.mgrid[0:side, 0:side].astype(float)
    dy, dx = yy - cy, xx - cx
    if kind == 0:    # disc
        return dy ** 2 + dx ** 2 <= r ** 2
    if kind == 1:    # square
        return (np.abs(dy) <= r) & (np.abs(dx) <= r)
    if kind == 2:    # triangle, apex up
        return (dy <= r) & (dy >= -r) & (np.abs(dx) <= (dy + r) / 2)
    if kind == 3:    # ring
        d2 = dy ** 2 + dx ** 2
        return (d2 <= r ** 2) & (d2 >= (0.5 * r) ** 2)
    if kind == 4:    # plus
        w = max(r / 3, 0.5)
        return ((np.abs(dy) <= w) & (np.abs(dx) <= r)) | ((np.abs(dx) <= w) & (np.abs(dy) <= r))
    if kind == 5:    # diamond
        return np.abs(dy) + np.abs(dx) <= r
    w = max(r / 3, 0.5)  # horizontal bar
    return (np.abs(dy) <= w) & (np.abs(dx) <= r)


def render_synthetic(labels: LabelVector, side: int, gen: np.random.Generator) -> np.ndarray:
    """H x W x 3 float image in [0, 1] carrying one motif per set bit."""
    img = 0.45 + gen.uniform(-0.06, 0.06, size=(side, side, 3))
    band_w = max(1, side // 8)
    cell = (side - band_w) / 3
    for j in range(NUM_CLASSES):
        if not labels[j]:
            continue
        color = CLASS_COLORS[j]
        r0, r1 = (j * side) // NUM_CLASSES, ((j + 1) * side) // NUM_CLASSES
        img[r0:max(r1, r0 + 1), :band_w] = color
        row, col = _CELLS[j]
        jitter = gen.uniform(-0.12, 0.12, size=2) * cell
        cy = (row + 0.5) * cell + jitter[0]
        cx = band_w + (col + 0.5) * cell + jitter[1]
        img[_shape_mask(j, side, cy, cx, 0.38 * cell)] = color
    return np.clip(img, 0.0, 1.0)


def generate_synthetic(spec: SyntheticSpec, seed: int, out_dir, manifest_name: str = "manifest.jsonl") -> DatasetManifest:
    out = Path(out_dir)
    try:
        (out / "images").mkdir(parents=True, exist_ok=True)
    except OSError as e:
        raise OSError(f"cannot write synthetic dataset to {out}: {e}") from e
    gen = np.random.default_rng(seed)
    requested = [j for j, c in enumerate(spec.per_class_count) if c > 0]
    records = []
    for j in range(NUM_CLASSES):
        for _ in range(spec.per_class_count[j]):
            on = {j}
            for i in requested:
                if i != j and gen.random() < spec.co_label_probability:
                    on.add(i)
            labels = LabelVector.from_indices(on)
            rid = f"syn{len(records):05d}"
            rel = f"images/{rid}.png"
            pixels = render_synthetic(labels, spec.image_side, gen)
            Image.fromarray(np.round(pixels * 255).astype(np.uint8), "RGB").save(out / rel, format="PNG")
            records.append(ImageRecord(rid, rel, labels))
    m = DatasetManifest(tuple(records), str(out))
    save_manifest(m, out / manifest_name)
    return m


def standin_manifest(counts: Sequence[int] = PUBLISHED_COUNTS, prefix: str = "img") -> DatasetManifest:
    """Single-label manifest with the given per-class counts and no image files."""
    records = []
    for j, c in enumerate(counts):
        lv = LabelVector.from_indices([j])
        for k in range(c):
            rid = f"{prefix}-{CLASS_NAMES[j]}-{k:05d}"
            records.append(ImageRecord(rid, f"images/{rid}.png", lv))
    return DatasetManifest(tuple(records))
