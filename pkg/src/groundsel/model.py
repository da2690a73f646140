"""End-to-end model: gate -> selection -> features -> fusion, per sample."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .autodiff import ops
from .autodiff.tensor import DTensor, ParamStore, Tape
from .config import RunConfig
from .fusion import FusionParams, FusionResult, fusion_forward
from .geometry import Box3, distance_matrix
from .synthdata import QueryRecord, Scene, candidates_from_gt, toy_text_encode
from .vision import (
    AssembleParams,
    CameraRig,
    GateParams,
    ToyImageEncoder,
    camera_poses,
    feats_2d,
    gate_alphas,
    mean_box_size,
    render_stats,
    select_proposals,
    weight_3d,
)


@dataclass
class ForwardPlan:
    """Frozen discrete decisions for one sample.

    Gradient checking differences the loss with the proposal selection and the
    rasterized grid statistics pinned at the evaluation point; the tape
    differentiates exactly that function (the threshold is hard and the splat
    is treated as constant, so neither belongs to the differentiable path).
    """

    origin_index: np.ndarray
    fallback: bool
    stats: list[list[np.ndarray]]


@dataclass
class SampleForward:
    fusion: FusionResult
    pooled: DTensor  # (1, d) mean over proposals' post-stack features
    alphas: DTensor | None  # (M, 1) over all candidates; None in given-proposals mode
    boxes: list[Box3]
    origin_index: np.ndarray
    fallback: bool
    n_candidates: int


@dataclass
class Prediction:
    probs: np.ndarray
    boxes: list[Box3]
    fallback: bool
    n_candidates: int
    n_selected: int


class GroundingModel:
    """Owns every trainable tensor and runs the per-sample pipeline."""

    def __init__(self, cfg: RunConfig, room=(6.0, 6.0, 3.0)):
        cfg.validate()
        self.cfg = cfg
        self.room = tuple(room)
        self.store = ParamStore()
        rng = np.random.default_rng([cfg.seed, 99])
        self.gate = GateParams.create(self.store, rng)
        self.rig = CameraRig.create(self.store, cfg.views, cfg.pose_hidden, rng)
        self.assemble = AssembleParams.create(self.store, cfg.d3, cfg.d2, cfg.d_o, rng)
        self.fusion = FusionParams.create(self.store, cfg.d_o, cfg.d, cfg.layers, rng)
        self.encoder = ToyImageEncoder(cfg.d2)

    def _candidates(self, scene: Scene):
        if self.cfg.mode == "given-proposals":
            return candidates_from_gt(scene, self.cfg.d3, self.room)
        if scene.candidates is None:
            raise ValueError(f"scene {scene.scene_id} has no simulated detections")
        return scene.candidates

    def forward_sample(self, tape: Tape | None, scene: Scene, query: QueryRecord,
                       plan: ForwardPlan | None = None) -> SampleForward:
        cfg = self.cfg
        cands = self._candidates(scene)
        given = cfg.mode == "given-proposals"

        if given:
            alphas = None
            alpha_sel = ops.const(np.ones((len(cands), 1)))
            origin = np.arange(len(cands))
            fallback = False
        else:
            alphas = gate_alphas(tape, cands.scores, self.gate)
            if plan is not None:
                origin, fallback = plan.origin_index, plan.fallback
            else:
                origin, fallback = select_proposals(
                    cands, alphas.values, cfg.tau_f, cfg.tau_nms)
            alpha_sel = ops.take_rows(tape, alphas, origin)

        boxes = [cands.boxes[i] for i in origin]
        weighted3d = weight_3d(tape, cands.feats3d[origin], alpha_sel)
        poses = camera_poses(tape, boxes, self.rig)
        stats = plan.stats if plan is not None else None
        f2d = feats_2d(tape, boxes, poses, mean_box_size(boxes), scene.points,
                       self.encoder, cfg.render_res, stats=stats)
        feats = ops.linear(tape, ops.hconcat(tape, weighted3d, f2d),
                           self.assemble.weight, self.assemble.bias)
        dmat = distance_matrix(boxes)
        word_feats = toy_text_encode(query.tokens, cfg.d)
        result = fusion_forward(
            tape, feats, word_feats, dmat, self.fusion,
            use_spatial_attention=cfg.use_spatial_attention,
            normalize_distances=cfg.normalize_distances)
        pooled = ops.mean_rows(tape, result.features)
        return SampleForward(
            fusion=result, pooled=pooled, alphas=alphas, boxes=boxes,
            origin_index=np.asarray(origin), fallback=fallback,
            n_candidates=len(cands))

    def make_plan(self, scene: Scene, query: QueryRecord) -> ForwardPlan:
        """Selection and raster statistics at the current parameter values."""
        cfg = self.cfg
        cands = self._candidates(scene)
        if cfg.mode == "given-proposals":
            origin, fallback = np.arange(len(cands)), False
        else:
            alphas = gate_alphas(None, cands.scores, self.gate)
            origin, fallback = select_proposals(cands, alphas.values, cfg.tau_f, cfg.tau_nms)
        boxes = [cands.boxes[i] for i in origin]
        poses = camera_poses(None, boxes, self.rig)
        stats = render_stats(scene.points, boxes, [p.values for p in poses], cfg.render_res)
        return ForwardPlan(origin_index=np.asarray(origin), fallback=fallback, stats=stats)

    def predict_sample(self, scene: Scene, query: QueryRecord) -> Prediction:
        out = self.forward_sample(None, scene, query)
        return Prediction(
            probs=out.fusion.probs.values.reshape(-1).copy(),
            boxes=out.boxes,
            fallback=out.fallback,
            n_candidates=out.n_candidates,
            n_selected=len(out.boxes),
        )
