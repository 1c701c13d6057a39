"""Multi-label evaluation: exact-match and Hamming losses, per-class rates."""
from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field

import numpy as np

from . import CLASS_NAMES
from .calibration import apply_thresholds


def _pair(truth, pred):
    t = np.asarray(truth).astype(bool)
    p = np.asarray(pred).astype(bool)
    if t.shape != p.shape or t.ndim != 2:
        raise ValueError(f"truth {t.shape} and predictions {p.shape} must be equal 2-d shapes")
    if t.shape[0] == 0:
        raise ValueError("no samples")
    return t, p


def exact_match_loss(truth, pred) -> float:
    t, p = _pair(truth, pred)
    # mismatch count / N: equal to 1 - matches/N but rounded once
    return float((t != p).any(axis=1).sum()) / t.shape[0]


def hamming_loss(truth, pred) -> float:
    t, p = _pair(truth, pred)
    return float((t != p).sum()) / t.size


def _ratio(a, b):
    return a / b if b else 0.0


@dataclass(frozen=True)
class ClassMetrics:
    accuracy: float
    precision: float
    recall: float
    f1: float


def per_class_metrics(truth, pred) -> list[ClassMetrics]:
    t, p = _pair(truth, pred)
    out = []
    for j in range(t.shape[1]):
        tp = int((t[:, j] & p[:, j]).sum())
        fp = int((~t[:, j] & p[:, j]).sum())
        fn = int((t[:, j] & ~p[:, j]).sum())
        tn = int((~t[:, j] & ~p[:, j]).sum())
        prec, rec = _ratio(tp, tp + fp), _ratio(tp, tp + fn)
        out.append(ClassMetrics(_ratio(tp + tn, tp + tn + fp + fn), prec, rec,
                                _ratio(2 * prec * rec, prec + rec)))
    return out


@dataclass(frozen=True)
class MultiLabelReport:
    per_class: dict[str, ClassMetrics]
    exact_match_loss: float
    hamming_loss: float
    n: int
    thresholds: list[float] | None = None
    mean_accuracy: float = field(init=False)

    def __post_init__(self):
        accs = [m.accuracy for m in self.per_class.values()]
        object.__setattr__(self, "mean_accuracy", float(np.mean(accs)))

    def to_json(self) -> dict:
        return {
            "n": self.n,
            "thresholds": self.thresholds,
            "exact_match_loss": self.exact_match_loss,
            "hamming_loss": self.hamming_loss,
            "mean_accuracy": self.mean_accuracy,
            "per_class": {name: asdict(m) for name, m in self.per_class.items()},
        }

    def dumps(self) -> str:
        return json.dumps(self.to_json(), indent=2, sort_keys=True) + "\n"

    @classmethod
    def from_json(cls, d: dict) -> "MultiLabelReport":
        per = {name: ClassMetrics(**m) for name, m in d["per_class"].items()}
        return cls(per, d["exact_match_loss"], d["hamming_loss"], d["n"], d.get("thresholds"))

    def table(self) -> str:
        names = list(self.per_class)
        rows = [" " * 10 + "".join(f"{n:>12}" for n in names)]
        for field_ in ("accuracy", "precision", "recall", "f1"):
            rows.append(f"{field_:<10}" + "".join(f"{100 * getattr(self.per_class[n], field_):>12.1f}"
                                                  for n in names))
        rows.append(f"exact-match loss {self.exact_match_loss:.4f}   hamming loss {self.hamming_loss:.4f}   "
                    f"mean per-label accuracy {self.mean_accuracy:.4f}   n={self.n}")
        return "\n".join(rows)


def report_from_predictions(truth, pred, thresholds=None) -> MultiLabelReport:
    t, p = _pair(truth, pred)
    per = dict(zip(CLASS_NAMES, per_class_metrics(t, p)))
    return MultiLabelReport(per, exact_match_loss(t, p), hamming_loss(t, p), t.shape[0],
                            None if thresholds is None else [float(x) for x in thresholds])


def build_report(truth, probs, thresholds) -> MultiLabelReport:
    return report_from_predictions(truth, apply_thresholds(probs, thresholds), thresholds)
