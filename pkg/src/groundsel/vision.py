"""Dynamic vision stage: proposal gating, filtering + NMS, pose learning, toy rendering.

The renderer is a deterministic orthographic point splat standing in for a
real differentiable renderer, and the image encoder is a frozen random
projection standing in for a pretrained 2D backbone. Camera poses stay
differentiable by feeding the pose triple into the encoder input directly;
the rasterized grid itself is treated as constant.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .autodiff import ops
from .autodiff.tensor import DTensor, ParamStore, Tape
from .geometry import Box3, nms

MIN_CAMERA_DISTANCE = 0.05  # meters, floor applied after the learned offset
BOX_INFLATE = 1.05  # crop slack so jittered boxes still see their object
ENCODER_SEED = 714025  # frozen projection; not part of any run config

# grid statistics entering the encoder: mean+var per channel
N_CHANNELS = 5  # occupancy, depth, r, g, b
STATS_DIM = 2 * N_CHANNELS


@dataclass
class CandidateSet:
    """Simulated detector output: parallel boxes, confidences, 3D features."""

    boxes: list[Box3]
    scores: np.ndarray
    feats3d: np.ndarray

    def __post_init__(self):
        self.scores = np.asarray(self.scores, dtype=np.float64)
        self.feats3d = np.asarray(self.feats3d, dtype=np.float64)
        m = len(self.boxes)
        if m < 1:
            raise ValueError("CandidateSet needs at least one candidate")
        if self.scores.shape != (m,) or self.feats3d.shape[0] != m:
            raise ValueError("boxes/scores/feats3d lengths disagree")

    def __len__(self) -> int:
        return len(self.boxes)


@dataclass
class ProposalSet:
    """Gate-filtered, NMS-deduplicated subset of the candidates."""

    boxes: list[Box3]
    alphas: np.ndarray
    origin_index: np.ndarray
    fallback: bool  # set when no gate cleared the filter and argmax was kept
    feats: DTensor | None = None


@dataclass
class GateParams:
    weight: DTensor
    bias: DTensor

    @classmethod
    def create(cls, store: ParamStore, rng: np.random.Generator) -> "GateParams":
        # bias starts positive so every candidate clears the filter at init
        # and the count penalty has something to prune
        return cls(
            weight=store.register("gate.weight", rng.uniform(-1.0, 1.0, (1, 1))),
            bias=store.register("gate.bias", np.array([1.0])),
        )


@dataclass
class CameraRig:
    """Base poses (azimuth, elevation, distance) plus per-view offset MLPs."""

    base_poses: np.ndarray
    mlps: list[dict] = field(default_factory=list)

    @classmethod
    def create(cls, store: ParamStore, views: int, hidden: int,
               rng: np.random.Generator) -> "CameraRig":
        if views < 1:
            raise ValueError("need at least one view")
        azimuths = np.arange(views) * (2.0 * np.pi / views)
        base = np.stack([azimuths,
                         np.full(views, np.deg2rad(45.0)),
                         np.ones(views)], axis=1)
        rig = cls(base_poses=base)
        bound = 1.0 / np.sqrt(3.0)
        for j in range(views):
            # zero-initialized output layer: training starts at the base poses
            rig.mlps.append({
                "w1": store.register(f"rig.view{j}.w1", rng.uniform(-bound, bound, (3, hidden))),
                "b1": store.register(f"rig.view{j}.b1", np.zeros(hidden)),
                "w2": store.register(f"rig.view{j}.w2", np.zeros((hidden, 3))),
                "b2": store.register(f"rig.view{j}.b2", np.zeros(3)),
            })
        return rig

    @property
    def views(self) -> int:
        return self.base_poses.shape[0]


class ToyImageEncoder:
    """Frozen random projection of [grid stats || pose || mean box size]."""

    def __init__(self, d2: int):
        rng = np.random.default_rng(ENCODER_SEED)
        dim_in = STATS_DIM + 3 + 3
        self.projection = rng.normal(0.0, 1.0, (dim_in, d2)) / np.sqrt(dim_in)
        self.d2 = d2


def gate_alphas(tape: Tape | None, scores, gate: GateParams) -> DTensor:
    """Per-candidate survival probability: sigmoid of an affine map of the score."""
    col = np.asarray(scores, dtype=np.float64).reshape(-1, 1)
    return ops.sigmoid(tape, ops.linear(tape, ops.const(col), gate.weight, gate.bias))


def select_proposals(candidates: CandidateSet, alpha_values, tau_f: float,
                     tau_nms: float) -> tuple[np.ndarray, bool]:
    """Filter by alpha > tau_f, then greedy NMS ranked by alpha descending.

    Returns (indices into the candidate set in selection order, fallback flag).
    When nothing clears the filter the single argmax-alpha candidate is kept
    and the flag is set, since downstream stages need N >= 1.
    """
    if not 0.0 < tau_f < 1.0:
        raise ValueError(f"tau_f must lie in (0, 1), got {tau_f}")
    alpha = np.asarray(alpha_values, dtype=np.float64).reshape(-1)
    if alpha.shape[0] != len(candidates):
        raise ValueError("alpha/candidate count mismatch")
    passing = np.flatnonzero(alpha > tau_f)
    if passing.size == 0:
        return np.array([int(np.argmax(alpha))]), True
    sub_boxes = [candidates.boxes[i] for i in passing]
    kept = nms(sub_boxes, alpha[passing], tau_nms)
    return passing[kept], False


def weight_3d(tape: Tape | None, feats3d_selected: np.ndarray,
              alpha_selected: DTensor) -> DTensor:
    """Scale each selected 3D feature row by its gate probability."""
    return ops.scale_rows(tape, ops.const(feats3d_selected), alpha_selected)


def mean_box_size(boxes: list[Box3]) -> np.ndarray:
    return np.stack([b.size for b in boxes]).mean(axis=0)


def camera_poses(tape: Tape | None, boxes: list[Box3], rig: CameraRig) -> list[DTensor]:
    """Per-view pose = base pose + MLP(mean box size), distance floored."""
    if not boxes:
        raise ValueError("camera_poses needs at least one box")
    qbar = ops.const(mean_box_size(boxes).reshape(1, 3))
    floor = np.array([-np.inf, -np.inf, MIN_CAMERA_DISTANCE])
    poses = []
    for j in range(rig.views):
        mlp = rig.mlps[j]
        h = ops.tanh(tape, ops.linear(tape, qbar, mlp["w1"], mlp["b1"]))
        offset = ops.linear(tape, h, mlp["w2"], mlp["b2"])
        pose = ops.add(tape, ops.const(rig.base_poses[j].reshape(1, 3)), offset)
        poses.append(ops.clamp_min(tape, pose, floor))
    return poses


def _camera_basis(azimuth: float, elevation: float):
    ca, sa = np.cos(azimuth), np.sin(azimuth)
    ce, se = np.cos(elevation), np.sin(elevation)
    toward_cam = np.array([ce * ca, ce * sa, se])
    right = np.array([-sa, ca, 0.0])
    up = np.cross(toward_cam, right)
    return toward_cam, right, up


def render_view(points: np.ndarray, box: Box3, pose, res: int = 32) -> np.ndarray:
    """Orthographic splat of the scene points inside the (inflated) box.

    Returns a (res, res, 5) grid: occupancy, mean depth, mean r/g/b. The same
    inputs always give bitwise-identical output.
    """
    pose = np.asarray(pose, dtype=np.float64).reshape(-1)
    if pose[2] <= 0:
        raise ValueError("camera distance must be positive")
    grid = np.zeros((res, res, N_CHANNELS))
    if points.size == 0:
        return grid
    half = box.size * (BOX_INFLATE / 2.0)
    inside = np.all(np.abs(points[:, :3] - box.center) <= half, axis=1)
    if not inside.any():
        return grid
    pts = points[inside]
    toward_cam, right, up = _camera_basis(pose[0], pose[1])
    rel = pts[:, :3] - box.center
    window = float(np.linalg.norm(half))
    u = rel @ right / window
    v = rel @ up / window
    depth = pose[2] - rel @ toward_cam
    cols = np.clip(np.floor((u + 1.0) / 2.0 * res), 0, res - 1).astype(np.intp)
    rows = np.clip(np.floor((v + 1.0) / 2.0 * res), 0, res - 1).astype(np.intp)
    counts = np.zeros((res, res))
    np.add.at(counts, (rows, cols), 1.0)
    occupied = counts > 0
    grid[:, :, 0] = occupied.astype(np.float64)
    accum = np.zeros((res, res, 4))
    np.add.at(accum, (rows, cols), np.column_stack([depth, pts[:, 3], pts[:, 4], pts[:, 5]]))
    safe = np.maximum(counts, 1.0)
    for c in range(4):
        grid[:, :, 1 + c] = accum[:, :, c] / safe
    return grid


def grid_stats(grid: np.ndarray) -> np.ndarray:
    """Per-channel mean and variance, flattened to the encoder layout."""
    means = grid.reshape(-1, N_CHANNELS).mean(axis=0)
    varis = grid.reshape(-1, N_CHANNELS).var(axis=0)
    return np.concatenate([means, varis])


def render_stats(points: np.ndarray, boxes: list[Box3], pose_values: list[np.ndarray],
                 res: int) -> list[list[np.ndarray]]:
    """Stats for every (box, view) pair at the given pose values."""
    return [
        [grid_stats(render_view(points, box, pv, res=res)) for pv in pose_values]
        for box in boxes
    ]


def feats_2d(tape: Tape | None, boxes: list[Box3], poses: list[DTensor],
             qbar: np.ndarray, points: np.ndarray, encoder: ToyImageEncoder,
             res: int, stats: list[list[np.ndarray]] | None = None) -> DTensor:
    """View-averaged 2D encoding per box.

    ``stats`` can supply pre-rasterized grid statistics (the gradient-check
    path freezes them at the evaluation point); otherwise the splat runs at
    the current pose values. Either way only the pose triple carries gradient.
    """
    proj = ops.const(encoder.projection)
    qrow = ops.const(qbar.reshape(1, 3))
    rows = []
    for i, box in enumerate(boxes):
        acc = None
        for j, pose in enumerate(poses):
            if stats is not None:
                s = stats[i][j]
            else:
                s = grid_stats(render_view(points, box, pose.values, res=res))
            enc_in = ops.hconcat(tape, ops.const(s.reshape(1, -1)), pose, qrow)
            e = ops.matmul(tape, enc_in, proj)
            acc = e if acc is None else ops.add(tape, acc, e)
        rows.append(ops.scale(tape, acc, 1.0 / len(poses)))
    return ops.vstack(tape, rows)


@dataclass
class AssembleParams:
    weight: DTensor
    bias: DTensor

    @classmethod
    def create(cls, store: ParamStore, d3: int, d2: int, d_out: int,
               rng: np.random.Generator) -> "AssembleParams":
        bound = 1.0 / np.sqrt(d3 + d2)
        return cls(
            weight=store.register("assemble.weight",
                                  rng.uniform(-bound, bound, (d3 + d2, d_out))),
            bias=store.register("assemble.bias", np.zeros(d_out)),
        )


def assemble_features(tape: Tape | None, weighted3d: DTensor, feats2d: DTensor,
                      params: AssembleParams) -> DTensor:
    """Concatenate the weighted 3D and averaged 2D paths, then project to d_out."""
    return ops.linear(tape, ops.hconcat(tape, weighted3d, feats2d),
                      params.weight, params.bias)
