"""Desk-scale multi-object 3D grounding.

Implements the selection stage of a two-stage grounding pipeline: a dynamic
box-proposal gate with NMS, a toy multi-view renderer with learned camera
pose offsets, language-conditioned spatial attention fusion, reference /
contrastive / count-penalty losses, and the five-category F1 evaluation
protocol, all trained on deterministic synthetic scenes.
"""

__version__ = "0.1.0"

from .geometry import Box3, DistanceMatrix, distance_matrix, iou, nms, volume

__all__ = [
    "Box3",
    "DistanceMatrix",
    "distance_matrix",
    "iou",
    "nms",
    "volume",
    "__version__",
]
