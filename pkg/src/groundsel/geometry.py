"""Axis-aligned 3D box arithmetic: volume, IoU, greedy NMS, inverse-distance matrices."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

# Floor applied to center distances before inversion, in meters. Keeps the
# inverse-distance matrix finite when two distinct boxes share a center.
DISTANCE_CLAMP = 1e-4


@dataclass(frozen=True, eq=False)
class Box3:
    """Axis-aligned box given by center and per-axis extent, in meters."""

    center: np.ndarray
    size: np.ndarray

    def __post_init__(self):
        center = np.asarray(self.center, dtype=np.float64)
        size = np.asarray(self.size, dtype=np.float64)
        if center.shape != (3,) or size.shape != (3,):
            raise ValueError("Box3 needs 3-vectors for center and size")
        if not (np.all(np.isfinite(center)) and np.all(np.isfinite(size))):
            raise ValueError("Box3 center/size must be finite")
        if np.any(size <= 0):
            raise ValueError(f"Box3 size components must be > 0, got {size}")
        object.__setattr__(self, "center", center)
        object.__setattr__(self, "size", size)

    @property
    def min_corner(self) -> np.ndarray:
        return self.center - self.size / 2.0

    @property
    def max_corner(self) -> np.ndarray:
        return self.center + self.size / 2.0

    def to_dict(self) -> dict:
        return {"center": self.center.tolist(), "size": self.size.tolist()}

    @classmethod
    def from_dict(cls, d: dict) -> "Box3":
        return cls(center=np.asarray(d["center"]), size=np.asarray(d["size"]))


@dataclass(frozen=True, eq=False)
class DistanceMatrix:
    """Pairwise inverse center-distance matrix; larger means closer."""

    values: np.ndarray


def volume(box: Box3) -> float:
    """Box volume in cubic meters."""
    return float(np.prod(box.size))


def iou(a: Box3, b: Box3) -> float:
    """Intersection-over-union of two boxes; 0 when disjoint, 1 when identical."""
    lo = np.maximum(a.min_corner, b.min_corner)
    hi = np.minimum(a.max_corner, b.max_corner)
    edges = np.maximum(0.0, hi - lo)
    inter = float(np.prod(edges))
    union = volume(a) + volume(b) - inter
    return inter / union


def nms(boxes: list[Box3], scores, tau_nms: float) -> list[int]:
    """Greedy non-maximum suppression.

    Repeatedly keeps the highest-scoring remaining box and discards boxes whose
    IoU against it exceeds ``tau_nms``. Ties on score go to the lower original
    index. Returns the kept indices (into the input list) in selection order.
    """
    scores = np.asarray(scores, dtype=np.float64)
    if len(boxes) != scores.shape[0]:
        raise ValueError("boxes and scores must have equal length")
    if not 0.0 <= tau_nms <= 1.0:
        raise ValueError(f"tau_nms must lie in [0, 1], got {tau_nms}")
    if len(boxes) == 0:
        return []
    order = sorted(range(len(boxes)), key=lambda i: (-scores[i], i))
    kept: list[int] = []
    suppressed = np.zeros(len(boxes), dtype=bool)
    for i in order:
        if suppressed[i]:
            continue
        kept.append(i)
        for j in order:
            if not suppressed[j] and j != i and iou(boxes[i], boxes[j]) > tau_nms:
                suppressed[j] = True
    return kept


def distance_matrix(boxes: list[Box3]) -> DistanceMatrix:
    """Inverse pairwise center-distance matrix.

    Off-diagonal entries are 1 / max(||c_i - c_j||, DISTANCE_CLAMP). The
    diagonal is set to each row's largest off-diagonal entry so self-attention
    stays comparable to the nearest neighbor; a single box yields [[1.0]].
    """
    n = len(boxes)
    if n < 1:
        raise ValueError("distance_matrix needs at least one box")
    centers = np.stack([b.center for b in boxes])
    diff = centers[:, None, :] - centers[None, :, :]
    dist = np.sqrt(np.sum(diff * diff, axis=2))
    values = 1.0 / np.maximum(dist, DISTANCE_CLAMP)
    if n == 1:
        values[0, 0] = 1.0
    else:
        off = values.copy()
        np.fill_diagonal(off, -np.inf)
        np.fill_diagonal(values, off.max(axis=1))
    return DistanceMatrix(values=values)
