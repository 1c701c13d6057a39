"""Per-class augmentation planning and execution for imbalanced manifests.

Each class with a target above its current count gets
``target - current`` jobs. Job ``k`` for a class with ``n`` source
records and ``K`` allowed kinds uses source ``k mod n`` and kind
``(k mod n + k // n) mod K``, so every source cycles through distinct kinds
before any (source, kind) pair repeats.
"""
from __future__ import annotations

import dataclasses
import json
import os
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import CLASS_NAMES, NUM_CLASSES
from .dataset import DatasetManifest, ImageRecord, Provenance, class_counts
from .imageops import CATALOG_KINDS, KINDS, TransformSpec, apply_transform, load_and_resize, save_png
from .seeding import derive_seed

FLIPS = ("hflip", "vflip")

# Published balancing plan: allowed transforms and target count; None keeps the current count.
BALANCING_PLAN = {
    "fire": (CATALOG_KINDS, 4578),
    "flag": (FLIPS + ("noise", "affine"), 5829),
    "large_crowd": ((), None),
    "other": (CATALOG_KINDS, 3472),
    "police": (("affine", "noise"), 6477),
    "sign": ((), None),
    "student": (FLIPS + ("noise", "affine", "crop"), 6165),
}


class AugmentationError(RuntimeError):
    def __init__(self, message, source_id=None, job_index=None):
        super().__init__(message)
        self.source_id = source_id
        self.job_index = job_index


@dataclass(frozen=True)
class ClassPlan:
    kinds: tuple[str, ...]
    target: int

    def __post_init__(self):
        object.__setattr__(self, "kinds", tuple(self.kinds))
        bad = [k for k in self.kinds if k not in KINDS]
        if bad:
            raise ValueError(f"unknown transform kinds {bad}")


@dataclass(frozen=True)
class AugmentationPlan:
    classes: tuple[ClassPlan, ...]
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "classes", tuple(self.classes))
        if len(self.classes) != NUM_CLASSES:
            raise ValueError(f"plan needs {NUM_CLASSES} class entries")

    def validate(self, current: list[int]) -> None:
        for j, cp in enumerate(self.classes):
            if cp.target < current[j]:
                raise ValueError(f"{CLASS_NAMES[j]}: target {cp.target} below current count {current[j]}")
            if cp.target > current[j] and not cp.kinds:
                raise ValueError(f"{CLASS_NAMES[j]}: needs growth but has no allowed transforms")

    def to_json(self) -> dict:
        return {"seed": self.seed,
                "classes": {CLASS_NAMES[j]: {"kinds": list(cp.kinds), "target": cp.target}
                            for j, cp in enumerate(self.classes)}}


def augmentation_pool(m: DatasetManifest) -> list[ImageRecord]:
    """Records eligible for augmentation: the train split once a split exists."""
    if any(r.split != "unassigned" for r in m.records):
        return [r for r in m.records if r.split == "train"]
    return list(m.records)


def default_plan(m: DatasetManifest, seed: int = 0) -> AugmentationPlan:
    current = class_counts(augmentation_pool(m))
    classes = []
    for j, name in enumerate(CLASS_NAMES):
        kinds, target = BALANCING_PLAN[name]
        classes.append(ClassPlan(kinds, current[j] if target is None else max(target, current[j])))
    return AugmentationPlan(tuple(classes), seed)


def load_plan(path, m: DatasetManifest | None = None) -> AugmentationPlan:
    """Read a JSON plan; a target of ``"current"`` needs ``m`` to resolve."""
    d = json.loads(Path(path).read_text(encoding="utf-8"))
    current = class_counts(augmentation_pool(m)) if m is not None else None
    classes = []
    for j, name in enumerate(CLASS_NAMES):
        entry = d["classes"].get(name, {"kinds": [], "target": "current"})
        target = entry.get("target", "current")
        if target == "current":
            if current is None:
                raise ValueError(f"plan target 'current' for {name} needs a manifest")
            target = current[j]
        classes.append(ClassPlan(tuple(entry.get("kinds", ())), int(target)))
    return AugmentationPlan(tuple(classes), int(d.get("seed", 0)))


def save_plan(plan: AugmentationPlan, path) -> None:
    Path(path).write_text(json.dumps(plan.to_json(), indent=2) + "\n", encoding="utf-8")


@dataclass(frozen=True)
class Job:
    index: int
    class_index: int
    source_id: str
    spec: TransformSpec
    cycle: int

    @property
    def record_id(self) -> str:
        return f"{self.source_id}~{CLASS_NAMES[self.class_index]}~{self.spec.kind}~{self.cycle}"


def plan_jobs(m: DatasetManifest, plan: AugmentationPlan) -> list[Job]:
    pool = augmentation_pool(m)
    current = class_counts(pool)
    plan.validate(current)
    jobs = []
    for j, cp in enumerate(plan.classes):
        need = cp.target - current[j]
        if need == 0:
            continue
        sources = [r for r in pool if r.provenance.is_original and r.labels[j]]
        if not sources:
            raise ValueError(f"{CLASS_NAMES[j]}: needs {need} new records but has no original sources")
        n, kk = len(sources), len(cp.kinds)
        for k in range(need):
            rnd = k // n
            kind = cp.kinds[(k % n + rnd) % kk]
            cycle = rnd // kk
            src = sources[k % n]
            seed = derive_seed(plan.seed, src.id, kind, cycle, j)
            jobs.append(Job(len(jobs), j, src.id, TransformSpec(kind, seed=seed), cycle))
    return jobs


def augmented_record(source: ImageRecord, job: Job, path: str = "") -> ImageRecord:
    prov = Provenance("augmented", source.id, job.spec.to_json(), job.class_index)
    return ImageRecord(job.record_id, path, source.labels, prov, source.split)


def run_augmentation(m: DatasetManifest, jobs: list[Job], out_dir=None, side: int = 224,
                     materialize: bool = False) -> DatasetManifest:
    """Append one augmented record per job.

    Without ``materialize`` the new records have an empty path and are
    regenerated from (source, transform) on load.
    """
    if materialize and out_dir is None:
        raise ValueError("materialize needs an out_dir")
    ids = m.by_id()
    new = []
    cache: dict[str, np.ndarray] = {}
    for job in jobs:
        src = ids.get(job.source_id)
        if src is None:
            raise AugmentationError(f"job {job.index}: unknown source {job.source_id!r}", job.source_id, job.index)
        path = ""
        if materialize:
            rel = f"augmented/{job.record_id}.png"
            try:
                if src.id not in cache:
                    cache = {src.id: load_and_resize(m.resolve(src), side)}
                save_png(apply_transform(cache[src.id], job.spec), Path(out_dir) / rel)
            except Exception as e:
                raise AugmentationError(f"job {job.index} on source {src.id!r} ({job.spec.kind}): {e}",
                                        src.id, job.index) from e
            path = rel
        new.append(augmented_record(src, job, path))
    records = m.records
    if out_dir is not None:
        records = rebase(m, out_dir).records
    return DatasetManifest(records + tuple(new), str(out_dir) if out_dir is not None else m.root)


def rebase(m: DatasetManifest, new_root) -> DatasetManifest:
    """Rewrite relative paths so they resolve identically from ``new_root``."""
    out = []
    for r in m.records:
        if r.path and not Path(r.path).is_absolute():
            target = os.path.abspath(Path(m.root) / r.path)
            r = dataclasses.replace(r, path=os.path.relpath(target, os.path.abspath(new_root)))
        out.append(r)
    return DatasetManifest(tuple(out), str(new_root))


def count_bookkeeping(m: DatasetManifest, jobs: list[Job]) -> dict[str, list[int]]:
    """Expected post-run counts split into driven jobs and incidental gains."""
    ids = m.by_id()
    before = class_counts(augmentation_pool(m))
    driven = [0] * NUM_CLASSES
    incidental = [0] * NUM_CLASSES
    for job in jobs:
        bits = ids[job.source_id].labels.bits
        for j in range(NUM_CLASSES):
            if bits[j]:
                if j == job.class_index:
                    driven[j] += 1
                else:
                    incidental[j] += 1
    after = [b + d + i for b, d, i in zip(before, driven, incidental)]
    return {"before": before, "driven": driven, "incidental": incidental, "after": after}


def summary_table(m: DatasetManifest, plan: AugmentationPlan, jobs: list[Job]) -> str:
    book = count_bookkeeping(m, jobs)
    lines = [f"{'class':<12} {'transforms':<40} {'before':>7} {'jobs':>6} {'after':>7}"]
    for j, name in enumerate(CLASS_NAMES):
        kinds = plan.classes[j].kinds
        label = ", ".join(kinds) if len(kinds) < 6 else f"all {len(kinds)}" if set(kinds) == set(CATALOG_KINDS) \
            else f"{len(kinds)} kinds"
        lines.append(f"{name:<12} {label or '--':<40} {book['before'][j]:>7} {book['driven'][j]:>6} "
                     f"{book['after'][j]:>7}")
    lines.append(f"{len(jobs)} jobs")
    return "\n".join(lines)


def load_image(m: DatasetManifest, record: ImageRecord, side: int, ids=None) -> np.ndarray:
    if record.path:
        return load_and_resize(m.resolve(record), side)
    ids = ids if ids is not None else m.by_id()
    src = ids[record.provenance.source_id]
    return apply_transform(load_image(m, src, side, ids), TransformSpec.from_json(record.provenance.transform))


def load_images(m: DatasetManifest, side: int, records=None) -> np.ndarray:
    records = m.records if records is None else records
    ids = m.by_id()
    out = np.empty((len(records), 3, side, side))
    for i, r in enumerate(records):
        out[i] = load_image(m, r, side, ids)
    return out
