"""Mini-batch training loop and resumable checkpoints."""
from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from ..serialization import load_arrays, save_arrays
from .adam import AdamState, adam_step
from .model import ArchConfig, CnnModel

FORMAT = "protestnet-cnn/1"


@dataclass(frozen=True)
class TrainConfig:
    batch_size: int = 202
    epochs: int = 1
    lr: float = 0.001
    seed: int = 0
    clip_norm: float | None = None

    def __post_init__(self):
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        if self.epochs < 1:
            raise ValueError("epochs must be >= 1")


def batches_per_epoch(n: int, batch_size: int) -> int:
    return math.ceil(n / batch_size)


@dataclass
class TrainResult:
    model: CnnModel
    adam: AdamState
    history: list[dict] = field(default_factory=list)
    rng_state: dict | None = None


def train_arrays(model: CnnModel, X, Y, cfg: TrainConfig, adam: AdamState | None = None,
                 rng_state: dict | None = None) -> TrainResult:
    """Train ``model`` in place on image array ``X`` and 0/1 targets ``Y``.

    Passing back ``adam`` and ``rng_state`` from a previous result resumes
    the run exactly where it stopped.
    """
    X = np.asarray(X, dtype=np.float64)
    Y = np.asarray(Y, dtype=np.float64)
    n = X.shape[0]
    if n == 0:
        raise ValueError("empty training set")
    if Y.shape != (n, model.arch.n_classes):
        raise ValueError(f"targets shape {Y.shape} does not match {n} images")
    adam = adam if adam is not None else AdamState.fresh(model.params, lr=cfg.lr)
    gen = np.random.default_rng(cfg.seed)
    if rng_state is not None:
        gen.bit_generator.state = rng_state
    history = []
    nb = batches_per_epoch(n, cfg.batch_size)
    for epoch in range(cfg.epochs):
        order = gen.permutation(n)
        for b in range(nb):
            idx = order[b * cfg.batch_size:(b + 1) * cfg.batch_size]
            loss, grads = model.loss_and_grads(X[idx], Y[idx])
            if cfg.clip_norm is not None:
                norm = math.sqrt(sum(float((g * g).sum()) for g in grads.values()))
                if norm > cfg.clip_norm:
                    grads = {k: g * (cfg.clip_norm / norm) for k, g in grads.items()}
            adam_step(model.params, grads, adam)
            history.append({"epoch": epoch, "batch": b, "step": adam.t, "loss": loss})
    return TrainResult(model, adam, history, gen.bit_generator.state)


def train(model: CnnModel, manifest, cfg: TrainConfig) -> TrainResult:
    """Train on the train split of a manifest (the whole manifest if unsplit)."""
    from ..augmentor import load_images

    records = [r for r in manifest.records if r.split == "train"] or \
        [r for r in manifest.records if r.split == "unassigned"]
    if not records:
        raise ValueError("manifest has no training records")
    X = load_images(manifest, model.arch.input_side, records)
    Y = np.stack([r.labels.as_array() for r in records])
    return train_arrays(model, X, Y, cfg)


def save_checkpoint(path, model: CnnModel, adam: AdamState | None = None, rng_state: dict | None = None,
                    extra: dict | None = None) -> None:
    arrays = {f"param/{k}": v for k, v in model.params.items()}
    adam_meta = None
    if adam is not None:
        adam_meta = {"lr": adam.lr, "beta1": adam.beta1, "beta2": adam.beta2, "eps": adam.eps, "t": adam.t}
        arrays.update({f"adam_m/{k}": v for k, v in adam.m.items()})
        arrays.update({f"adam_v/{k}": v for k, v in adam.v.items()})
    meta = {"format": FORMAT, "arch": model.arch.to_json(), "adam": adam_meta,
            "rng_state": _jsonable(rng_state), "extra": extra or {}}
    save_arrays(path, meta, arrays)


def load_checkpoint(path) -> tuple[CnnModel, AdamState | None, dict]:
    meta, arrays = load_arrays(path)
    if meta.get("format") != FORMAT:
        raise ValueError(f"{path}: not a CNN checkpoint")
    a = meta["arch"]
    arch = ArchConfig(**{**a, "widths": tuple(a["widths"])})
    model = CnnModel(arch, {k[len("param/"):]: v for k, v in arrays.items() if k.startswith("param/")})
    adam = None
    if meta["adam"] is not None:
        adam = AdamState(**meta["adam"],
                         m={k[len("adam_m/"):]: v for k, v in arrays.items() if k.startswith("adam_m/")},
                         v={k[len("adam_v/"):]: v for k, v in arrays.items() if k.startswith("adam_v/")})
    return model, adam, meta


def _jsonable(obj):
    return None if obj is None else json.loads(json.dumps(obj))


def save_history(history: list[dict], path) -> None:
    with open(Path(path), "w", encoding="utf-8", newline="\n") as f:
        for h in history:
            f.write(json.dumps(h, sort_keys=True) + "\n")


def train_config_dict(cfg: TrainConfig) -> dict:
    return asdict(cfg)
