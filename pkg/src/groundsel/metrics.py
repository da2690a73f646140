"""Category-wise F1 protocol for multi-target grounding, plus single-target accuracy."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .assignment import hungarian_max
from .geometry import Box3, iou

ZT_NO_D = "ZT w/o D"
ZT_D = "ZT w/D"
ST_NO_D = "ST w/o D"
ST_D = "ST w/D"
MT = "MT"

# Reporting order follows the benchmark's column layout.
CATEGORY_ORDER = (ZT_NO_D, ZT_D, ST_NO_D, ST_D, MT)


@dataclass(frozen=True)
class SampleRecord:
    """One evaluated query: predictions, ground truth, and the distractor context.

    ``scene_classes`` is the class id of every object in the scene (targets
    included). Distractors are non-target objects sharing ``target_class``,
    i.e. same-class objects beyond the ground-truth count.
    """

    predicted: tuple[Box3, ...]
    ground_truth: tuple[Box3, ...]
    target_class: int
    scene_classes: tuple[int, ...]

    def distractors_present(self) -> bool:
        same_class = sum(1 for c in self.scene_classes if c == self.target_class)
        return same_class > len(self.ground_truth)


def categorize(rec: SampleRecord) -> str:
    """Assign the five-way category from target count and distractor presence."""
    n = len(rec.ground_truth)
    if n == 0:
        return ZT_D if rec.distractors_present() else ZT_NO_D
    if n == 1:
        return ST_D if rec.distractors_present() else ST_NO_D
    return MT


def sample_f1(rec: SampleRecord, theta: float) -> float:
    """F1 of one sample at IoU threshold theta.

    Predictions are matched one-to-one to ground truth by a max-total-IoU
    assignment; a matched pair counts as a true positive when its IoU >= theta.
    Zero-target convention: an empty prediction set scores 1, anything else 0.
    """
    np_, ng = len(rec.predicted), len(rec.ground_truth)
    if ng == 0:
        return 1.0 if np_ == 0 else 0.0
    if np_ == 0:
        return 0.0
    mat = np.array([[iou(p, g) for g in rec.ground_truth] for p in rec.predicted])
    matching = hungarian_max(mat)
    tp = sum(1 for i, j in matching.pairs if mat[i, j] >= theta)
    precision = tp / np_
    recall = tp / ng
    if precision + recall == 0.0:
        return 0.0
    return 2.0 * precision * recall / (precision + recall)


def dataset_f1(records, theta: float) -> dict:
    """Per-category mean F1 and their unweighted overall mean.

    Categories with no samples are excluded from the overall mean and listed
    under ``empty_categories``.
    """
    buckets: dict[str, list[float]] = {name: [] for name in CATEGORY_ORDER}
    for rec in records:
        buckets[categorize(rec)].append(sample_f1(rec, theta))
    categories = {}
    present = []
    for name in CATEGORY_ORDER:
        vals = buckets[name]
        f1 = sum(vals) / len(vals) if vals else 0.0
        categories[name] = {"f1": f1, "count": len(vals)}
        if vals:
            present.append(f1)
    overall = sum(present) / len(present) if present else 0.0
    return {
        "theta": theta,
        "categories": categories,
        "overall": overall,
        "empty_categories": [n for n in CATEGORY_ORDER if not buckets[n]],
    }


def acc_at(records, theta: float) -> float:
    """Fraction of single-target samples whose one predicted box reaches IoU >= theta."""
    records = list(records)
    if not records:
        raise ValueError("acc_at needs at least one record")
    hits = 0
    for rec in records:
        if len(rec.ground_truth) != 1:
            raise ValueError("acc_at records must carry exactly one ground-truth box")
        if len(rec.predicted) != 1:
            raise ValueError("acc_at records must carry exactly one predicted box")
        if iou(rec.predicted[0], rec.ground_truth[0]) >= theta:
            hits += 1
    return hits / len(records)


def format_table(report: dict) -> str:
    """Plain-text table mirroring the benchmark column layout."""
    cols = list(CATEGORY_ORDER) + ["All"]
    vals = [report["categories"][c]["f1"] for c in CATEGORY_ORDER] + [report["overall"]]
    counts = [str(report["categories"][c]["count"]) for c in CATEGORY_ORDER] + [
        str(sum(report["categories"][c]["count"] for c in CATEGORY_ORDER))
    ]
    width = max(len(c) for c in cols) + 2
    head = "row".ljust(6) + "".join(c.rjust(width) for c in cols)
    body = "F1".ljust(6) + "".join(f"{v:.4f}".rjust(width) for v in vals)
    cnts = "n".ljust(6) + "".join(c.rjust(width) for c in counts)
    return f"F1@{report['theta']:g}\n{head}\n{body}\n{cnts}"
