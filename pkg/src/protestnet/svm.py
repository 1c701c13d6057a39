"""One-vs-all linear SVMs trained by primal stochastic subgradient descent.

Per class k the trainer minimizes

    1/2 ||w||^2 + C_k * sum_i max(0, 1 - y_i (w . x_i + b))

which is the Pegasos objective ``lam/2 ||w||^2 + mean_i hinge`` with
``lam = 1 / (C_k n)``. Steps are ``1 / (lam t)`` over shuffled mini-batches.
The bias is carried as a weight on a constant feature and therefore shares
the shrinkage of the other weights.
"""
from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np

from . import CLASS_NAMES, NUM_CLASSES
from .serialization import load_arrays, save_arrays

FORMAT = "protestnet-svm/1"


def class_weight(C: float, n: int, k: int, n_j: int) -> float:
    """Inverse-frequency penalty ``C * n / (k * n_j)`` for a class of size ``n_j``."""
    if n_j <= 0:
        raise ValueError("class has no samples; its weight is undefined")
    if n <= 0 or k <= 0:
        raise ValueError("n and k must be positive")
    return C * n / (k * n_j)


def featurize(img: np.ndarray) -> np.ndarray:
    """Channel-major flattening of a (3, side, side) image."""
    return np.asarray(img, dtype=np.float64).reshape(-1)


@dataclass(frozen=True)
class SvmConfig:
    C: float = 1.0
    max_iterations: int = 4000
    batch_size: int = 32
    use_class_weighting: bool = False
    feature_side: int = 224
    project: bool = True
    seed: int = 0

    def __post_init__(self):
        if self.max_iterations < 1:
            raise ValueError("max_iterations must be >= 1")
        if self.C <= 0:
            raise ValueError("C must be positive")
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")


@dataclass
class LinearModel:
    weights: np.ndarray
    bias: float
    class_index: int
    penalty: float


@dataclass
class OneVsAllSvm:
    models: list[LinearModel]
    feature_side: int

    def __post_init__(self):
        if sorted(m.class_index for m in self.models) != list(range(NUM_CLASSES)):
            raise ValueError("need one model per class index 0..6")
        self.models = sorted(self.models, key=lambda m: m.class_index)
        if len({m.weights.shape for m in self.models}) != 1:
            raise ValueError("models disagree on feature dimension")

    @property
    def dim(self) -> int:
        return self.models[0].weights.shape[0]

    def weight_matrix(self) -> tuple[np.ndarray, np.ndarray]:
        return (np.stack([m.weights for m in self.models], axis=1),
                np.array([m.bias for m in self.models]))


def hinge_objective(X, Y, W, b, penalties) -> np.ndarray:
    """Per-class primal objective for labels ``Y`` in {-1, +1}."""
    margins = Y * (X @ W + b)
    hinge = np.maximum(0.0, 1.0 - margins).sum(axis=0)
    return 0.5 * ((W ** 2).sum(axis=0) + b ** 2) + penalties * hinge


def train_one_vs_all(features: np.ndarray, labels: np.ndarray, cfg: SvmConfig,
                     history: list | None = None) -> OneVsAllSvm:
    """Fit all seven classes; ``history`` collects per-epoch objectives if given."""
    X = np.asarray(features, dtype=np.float64)
    L = np.asarray(labels).astype(bool)
    if X.ndim != 2 or L.shape != (X.shape[0], NUM_CLASSES):
        raise ValueError(f"features {X.shape} and labels {L.shape} are inconsistent")
    n = X.shape[0]
    pos = L.sum(axis=0)
    for j in range(NUM_CLASSES):
        if pos[j] == 0 or pos[j] == n:
            side = "positive" if pos[j] == 0 else "negative"
            raise ValueError(f"class {CLASS_NAMES[j]!r} has no {side} examples")
    if cfg.use_class_weighting:
        penalties = np.array([class_weight(cfg.C, n, NUM_CLASSES, int(pos[j])) for j in range(NUM_CLASSES)])
    else:
        penalties = np.full(NUM_CLASSES, float(cfg.C))
    Y = np.where(L, 1.0, -1.0)
    Xa = np.hstack([X, np.ones((n, 1))])
    lam = 1.0 / (penalties * n)
    radius = 1.0 / np.sqrt(lam)
    Wa = np.zeros((Xa.shape[1], NUM_CLASSES))
    gen = np.random.default_rng(cfg.seed)
    t = 0
    for _ in range(cfg.max_iterations):
        order = gen.permutation(n)
        for start in range(0, n, cfg.batch_size):
            idx = order[start:start + cfg.batch_size]
            t += 1
            eta = 1.0 / (lam * t)
            xb, yb = Xa[idx], Y[idx]
            active = (yb * (xb @ Wa) < 1.0) * yb
            Wa = (1.0 - eta * lam) * Wa + (eta / len(idx)) * (xb.T @ active)
            if cfg.project:
                norms = np.sqrt((Wa ** 2).sum(axis=0))
                Wa = Wa * np.minimum(1.0, radius / np.maximum(norms, 1e-300))
        if history is not None:
            history.append(hinge_objective(X, Y, Wa[:-1], Wa[-1], penalties).tolist())
    models = [LinearModel(Wa[:-1, j].copy(), float(Wa[-1, j]), j, float(penalties[j]))
              for j in range(NUM_CLASSES)]
    return OneVsAllSvm(models, cfg.feature_side)


def decision_scores(svm: OneVsAllSvm, x: np.ndarray) -> np.ndarray:
    """Scores ``w . x + b``; ``x`` may be one vector or an (N, d) matrix."""
    x = np.asarray(x, dtype=np.float64)
    if x.shape[-1] != svm.dim:
        raise ValueError(f"feature dimension {x.shape[-1]} does not match model dimension {svm.dim}")
    W, b = svm.weight_matrix()
    return x @ W + b


def predict_multilabel(svm: OneVsAllSvm, x: np.ndarray) -> np.ndarray:
    return (decision_scores(svm, x) > 0).astype(np.uint8)


def predict_vote(svm: OneVsAllSvm, x: np.ndarray):
    # np.argmax returns the first maximum, i.e. the lowest class index on ties
    return np.argmax(decision_scores(svm, x), axis=-1)


def save_svm(svm: OneVsAllSvm, path, config: SvmConfig | None = None) -> None:
    W, b = svm.weight_matrix()
    meta = {"format": FORMAT, "feature_side": svm.feature_side,
            "class_index": [m.class_index for m in svm.models],
            "penalty": [m.penalty for m in svm.models],
            "config": asdict(config) if config is not None else None}
    save_arrays(path, meta, {"weights": W, "bias": b})


def load_svm(path) -> OneVsAllSvm:
    meta, arrays = load_arrays(path)
    if meta.get("format") != FORMAT:
        raise ValueError(f"{path}: not an SVM checkpoint")
    W, b = arrays["weights"], arrays["bias"]
    models = [LinearModel(W[:, j].copy(), float(b[j]), meta["class_index"][j], meta["penalty"][j])
              for j in range(W.shape[1])]
    return OneVsAllSvm(models, meta["feature_side"])
