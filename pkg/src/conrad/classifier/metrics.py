"""Per-class and support-weighted classification metrics."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

METRICS = ("TPR", "FPR", "PR", "RC", "FM", "AUC")


def confusion_matrix(y_true, y_pred, k: int) -> np.ndarray:
    """Rows are true classes, columns predicted classes."""
    y_true = np.asarray(y_true, dtype=np.int64)
    y_pred = np.asarray(y_pred, dtype=np.int64)
    return np.bincount(y_true * k + y_pred, minlength=k * k).reshape(k, k)


def _ratio(a: float, b: float) -> float:
    return a / b if b else 0.0


def class_rates(cm: np.ndarray, c: int) -> dict[str, float]:
    """TPR, FPR, PR, RC and FM of class ``c`` from a confusion matrix.

    Undefined ratios (empty denominators) are reported as 0.
    """
    cm = np.asarray(cm)
    tp = cm[c, c]
    fn = cm[c, :].sum() - tp
    fp = cm[:, c].sum() - tp
    tn = cm.sum() - tp - fn - fp
    tpr = _ratio(tp, tp + fn)
    pr = _ratio(tp, tp + fp)
    fm = 2 * pr * tpr / (pr + tpr) if pr + tpr > 0 else 0.0
    return {"TPR": tpr, "FPR": _ratio(fp, fp + tn), "PR": pr, "RC": tpr, "FM": fm}


def roc_auc(scores, positive) -> float:
    """Area under the ROC curve by trapezoidal integration, ties as one step.

    Returns nan when either class is absent.
    """
    s = np.asarray(scores, dtype=float)
    pos = np.asarray(positive, dtype=bool)
    n_pos = int(pos.sum())
    n_neg = len(pos) - n_pos
    if n_pos == 0 or n_neg == 0:
        return math.nan
    order = np.argsort(-s, kind="stable")
    s, pos = s[order], pos[order]
    tps = np.cumsum(pos)
    fps = np.cumsum(~pos)
    # keep the last index of each run of equal scores
    last = np.r_[np.flatnonzero(s[1:] != s[:-1]), len(s) - 1]
    tpr = np.r_[0.0, tps[last] / n_pos]
    fpr = np.r_[0.0, fps[last] / n_neg]
    return float(np.sum((fpr[1:] - fpr[:-1]) * (tpr[1:] + tpr[:-1]) / 2))


@dataclass
class MetricReport:
    classes: tuple[str, ...]
    confusion: np.ndarray
    per_class: dict[str, dict[str, float]]
    weighted: dict[str, float]
    support: dict[str, int]
    note: str = "weighted = test-support-weighted mean; AUC = one-vs-rest"
    extra: dict = field(default_factory=dict)

    @property
    def n(self) -> int:
        return int(self.confusion.sum())

    def to_json(self) -> dict:
        def clean(d):
            return {k: (None if isinstance(v, float) and math.isnan(v) else v) for k, v in d.items()}
        return {
            "classes": list(self.classes),
            "confusion": self.confusion.tolist(),
            "support": dict(self.support),
            "per_class": {c: clean(m) for c, m in self.per_class.items()},
            "weighted": clean(self.weighted),
            "note": self.note,
            **self.extra,
        }


def evaluate(y_true, probs: np.ndarray, classes: Sequence[str]) -> MetricReport:
    """Metrics from true class indices and per-class probability rows."""
    y_true = np.asarray(y_true, dtype=np.int64)
    probs = np.asarray(probs, dtype=float)
    k = len(classes)
    y_pred = np.argmax(probs, axis=1) if len(y_true) else np.zeros(0, dtype=np.int64)
    cm = confusion_matrix(y_true, y_pred, k)
    support = cm.sum(axis=1)
    per_class = {}
    for c, name in enumerate(classes):
        m = class_rates(cm, c)
        m["AUC"] = roc_auc(probs[:, c], y_true == c) if len(y_true) else math.nan
        per_class[name] = m
    weighted = weighted_average(per_class, {classes[c]: int(support[c]) for c in range(k)})
    return MetricReport(tuple(classes), cm, per_class, weighted,
                        {classes[c]: int(support[c]) for c in range(k)})


def weighted_average(per_class: dict[str, dict[str, float]], support: dict[str, int]) -> dict[str, float]:
    out = {}
    for m in METRICS:
        num = den = 0.0
        for c, vals in per_class.items():
            v = vals.get(m, math.nan)
            if math.isnan(v) or support[c] == 0:
                continue
            num += support[c] * v
            den += support[c]
        out[m] = num / den if den else math.nan
    return out
