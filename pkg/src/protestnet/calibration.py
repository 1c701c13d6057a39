"""Matthews correlation and per-class threshold selection."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import NUM_CLASSES


@dataclass(frozen=True)
class ConfusionCounts:
    tp: int
    fp: int
    fn: int
    tn: int

    def __post_init__(self):
        if min(self.tp, self.fp, self.fn, self.tn) < 0:
            raise ValueError("confusion counts must be non-negative")

    @classmethod
    def from_predictions(cls, truth, pred) -> "ConfusionCounts":
        t = np.asarray(truth).astype(bool)
        p = np.asarray(pred).astype(bool)
        return cls(int((t & p).sum()), int((~t & p).sum()), int((t & ~p).sum()), int((~t & ~p).sum()))


def mcc_binary(c: ConfusionCounts) -> float:
    """Binary MCC; 0 when any marginal is empty."""
    denom = (c.tp + c.fp) * (c.tp + c.fn) * (c.tn + c.fp) * (c.tn + c.fn)
    if denom == 0:
        return 0.0
    # integer numerator and denominator keep the result exact up to one rounding
    return (c.tp * c.tn - c.fp * c.fn) / math.sqrt(denom)


def mcc_multiclass(C) -> float:
    """K-class MCC from a confusion matrix ``C[true, predicted]``."""
    C = np.asarray(C)
    if C.ndim != 2 or C.shape[0] != C.shape[1] or C.size == 0:
        raise ValueError(f"confusion matrix must be square and non-empty, got shape {C.shape}")
    if (C < 0).any():
        raise ValueError("confusion matrix entries must be non-negative")
    C = C.astype(object) if np.issubdtype(C.dtype, np.integer) else C.astype(np.float64)
    t = C.sum(axis=0)   # column sums
    p = C.sum(axis=1)   # row sums
    c = np.trace(C)
    s = C.sum()
    if s == 0:
        raise ValueError("confusion matrix is empty (all zeros)")
    num = c * s - (p * t).sum()
    denom = (s * s - (p * p).sum()) * (s * s - (t * t).sum())
    if denom == 0:
        return 0.0
    return float(num) / math.sqrt(denom)


def threshold_grid(step: float = 0.1) -> list[float]:
    """Interior grid points k*step of (0, 1), e.g. 0.1 .. 0.9."""
    d = round(1.0 / step)
    if d < 2 or abs(d * step - 1.0) > 1e-9:
        raise ValueError(f"grid step must divide 1, got {step}")
    return [k / d for k in range(1, d)]


def apply_thresholds(probs, thresholds) -> np.ndarray:
    probs = np.asarray(probs, dtype=np.float64)
    th = np.asarray(thresholds, dtype=np.float64)
    if probs.ndim != 2 or probs.shape[1] != th.shape[0]:
        raise ValueError(f"probabilities {probs.shape} do not match {th.shape[0]} thresholds")
    return (probs >= th).astype(np.uint8)


def select_thresholds(probs, truth, step: float = 0.1) -> list[float]:
    """Per class, the smallest grid threshold maximizing binary MCC."""
    probs = np.asarray(probs, dtype=np.float64)
    truth = np.asarray(truth).astype(bool)
    if probs.shape != truth.shape or probs.ndim != 2:
        raise ValueError(f"probabilities {probs.shape} and truth {truth.shape} must match")
    grid = threshold_grid(step)
    out = []
    for j in range(probs.shape[1]):
        best, best_th = -math.inf, grid[0]
        for th in grid:
            score = mcc_binary(ConfusionCounts.from_predictions(truth[:, j], probs[:, j] >= th))
            if score > best:
                best, best_th = score, th
        out.append(best_th)
    return out


def format_thresholds(th) -> str:
    return ", ".join(f"{t:g}" for t in th)


def validate_thresholds(th) -> list[float]:
    th = [float(t) for t in th]
    if len(th) != NUM_CLASSES or not all(0.0 < t < 1.0 for t in th):
        raise ValueError(f"need {NUM_CLASSES} thresholds strictly inside (0, 1), got {th}")
    return th
