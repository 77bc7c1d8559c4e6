"""IoU / precision / recall and the paired comparison of two label sources."""
from __future__ import annotations

import os
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .imgcore import check_same_shape


def iou(pred: np.ndarray, gt: np.ndarray) -> float:
    """|pred & gt| / |pred | gt|, 1.0 when both are empty."""
    check_same_shape(pred, gt, "prediction and ground truth")
    pred, gt = pred.astype(bool), gt.astype(bool)
    union = np.count_nonzero(pred | gt)
    if union == 0:
        return 1.0
    return np.count_nonzero(pred & gt) / union


def precision_recall(pred: np.ndarray, gt: np.ndarray) -> tuple[float, float]:
    """Precision is 1.0 for an empty prediction, recall is 1.0 for an empty ground truth."""
    check_same_shape(pred, gt, "prediction and ground truth")
    pred, gt = pred.astype(bool), gt.astype(bool)
    inter = np.count_nonzero(pred & gt)
    n_pred, n_gt = np.count_nonzero(pred), np.count_nonzero(gt)
    precision = 1.0 if n_pred == 0 else inter / n_pred
    recall = 1.0 if n_gt == 0 else inter / n_gt
    return precision, recall


@dataclass
class SegScore:
    mean_iou: float
    precision: float
    recall: float
    per_item: list[tuple[float, float, float]] = field(default_factory=list)


def score(preds: Sequence[np.ndarray], gts: Sequence[np.ndarray]) -> SegScore:
    """Macro-averaged scores; per-item rows are (iou, precision, recall)."""
    if len(preds) != len(gts):
        raise ValueError(f"{len(preds)} predictions for {len(gts)} ground-truth masks")
    if len(preds) == 0:
        raise ValueError("nothing to score")
    rows = [(iou(p, g), *precision_recall(p, g)) for p, g in zip(preds, gts)]
    means = np.mean(np.array(rows), axis=0)
    return SegScore(float(means[0]), float(means[1]), float(means[2]), rows)


def compare_sources(labels_a: Sequence[np.ndarray], labels_b: Sequence[np.ndarray],
                    gt: Sequence[np.ndarray]) -> tuple[SegScore, SegScore]:
    if not len(labels_a) == len(labels_b) == len(gt):
        raise ValueError("label sources and ground truth must have equal lengths")
    return score(labels_a, gt), score(labels_b, gt)


def format_score_report(names: Sequence[str], scores: dict[str, SegScore]) -> str:
    """Per-item rows then one mean row; one column triple per source."""
    sources = list(scores)
    cols = ["item"] + [f"{s}_{m}" for s in sources for m in ("iou", "precision", "recall")]
    lines = ["\t".join(cols)]
    for i, name in enumerate(names):
        vals = [v for s in sources for v in scores[s].per_item[i]]
        lines.append("\t".join([name] + [f"{v:.4f}" for v in vals]))
    means = [v for s in sources for v in (scores[s].mean_iou, scores[s].precision, scores[s].recall)]
    lines.append("\t".join(["mean"] + [f"{v:.4f}" for v in means]))
    return "\n".join(lines) + "\n"


def write_score_report(path: str | os.PathLike, names: Sequence[str],
                       scores: dict[str, SegScore]) -> None:
    Path(path).write_text(format_score_report(names, scores))
