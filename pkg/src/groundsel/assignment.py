"""Optimal assignment between predicted and ground-truth boxes, plus label rules."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.optimize import linear_sum_assignment


@dataclass(frozen=True)
class Matching:
    """One-to-one assignment; ``pairs`` holds (prediction, ground-truth) indices."""

    pairs: tuple[tuple[int, int], ...]
    objective: float


def hungarian_max(iou_matrix) -> Matching:
    """Assignment maximizing total IoU over an N x K benefit matrix.

    Rectangular inputs behave like zero-padding to square with the dummy
    matches dropped: exactly min(N, K) real pairs come back.
    """
    m = np.asarray(iou_matrix, dtype=np.float64)
    if m.ndim != 2 or m.shape[0] < 1 or m.shape[1] < 1:
        raise ValueError(f"need a 2-D matrix with N,K >= 1, got shape {m.shape}")
    if not np.all(np.isfinite(m)):
        raise ValueError("iou matrix must be finite")
    rows, cols = linear_sum_assignment(m, maximize=True)
    order = np.argsort(rows)
    pairs = tuple((int(rows[i]), int(cols[i])) for i in order)
    return Matching(pairs=pairs, objective=float(m[rows, cols].sum()))


def derive_labels(matching: Matching | None, iou_matrix, tau_train: float) -> np.ndarray:
    """Binary target per prediction: 1 iff matched and its matched IoU > tau_train.

    ``matching=None`` is the zero-ground-truth case and yields all zeros
    without consulting the matrix columns.
    """
    if not 0.0 < tau_train < 1.0:
        raise ValueError(f"tau_train must lie in (0, 1), got {tau_train}")
    m = np.asarray(iou_matrix, dtype=np.float64)
    labels = np.zeros(m.shape[0], dtype=np.float64)
    if matching is None:
        return labels
    for pred, gt in matching.pairs:
        if m[pred, gt] > tau_train:
            labels[pred] = 1.0
    return labels


def reference_labels(iou_matrix, tau_train: float) -> np.ndarray:
    """Labels for a sample: Hungarian-derived, or all zeros when K = 0."""
    m = np.asarray(iou_matrix, dtype=np.float64)
    if m.ndim != 2:
        raise ValueError("iou matrix must be 2-D")
    if m.shape[1] == 0:
        if not 0.0 < tau_train < 1.0:
            raise ValueError(f"tau_train must lie in (0, 1), got {tau_train}")
        return np.zeros(m.shape[0], dtype=np.float64)
    return derive_labels(hungarian_max(m), m, tau_train)


def best_single(iou_row_max, tau_train: float) -> int | None:
    """Index of the best prediction against a single ground-truth box.

    Returns the argmax (ties to the lower index) when its IoU exceeds
    tau_train, else None: the sample then contributes no positive.
    """
    if not 0.0 < tau_train < 1.0:
        raise ValueError(f"tau_train must lie in (0, 1), got {tau_train}")
    v = np.asarray(iou_row_max, dtype=np.float64)
    if v.ndim != 1 or v.shape[0] < 1:
        raise ValueError("need a non-empty 1-D array of IoU values")
    idx = int(np.argmax(v))
    return idx if v[idx] > tau_train else None
