"""Deterministic synthetic scenes, simulated detections, and templated queries.

Stands in for the real scan-derived datasets: scenes are rejection-sampled
rooms of colored boxes, the "detector" emits jittered ground-truth copies plus
false positives, and descriptions are token templates with exact target
semantics. Everything is a pure function of (seed, config).
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .config import DataConfig
from .geometry import Box3, iou
from .metrics import MT, ST_D, ST_NO_D, ZT_D, ZT_NO_D
from .vision import CandidateSet

CLASSES = ("chair", "table", "lamp", "sofa", "bed", "desk", "shelf", "monitor", "plant", "crate")
CLASS_SIZE_RANGES = {
    "chair": (0.4, 0.7), "table": (0.8, 1.4), "lamp": (0.2, 0.4),
    "sofa": (1.2, 1.9), "bed": (1.4, 2.0), "desk": (0.9, 1.5),
    "shelf": (0.5, 1.0), "monitor": (0.3, 0.6), "plant": (0.3, 0.6),
    "crate": (0.4, 0.9),
}
COLORS = ("red", "green", "blue", "yellow", "white", "black")
COLOR_RGB = {
    "red": (0.9, 0.1, 0.1), "green": (0.1, 0.8, 0.15), "blue": (0.1, 0.2, 0.9),
    "yellow": (0.9, 0.85, 0.1), "white": (0.95, 0.95, 0.95), "black": (0.08, 0.08, 0.08),
}

# token vocabulary: template words, then colors, then classes
WORDS = ("the", "there", "is", "no", "near") + COLORS + CLASSES
WORD_TO_ID = {w: i for i, w in enumerate(WORDS)}

TEXT_SEED = 813719  # frozen text-encoder seed, not a run-config knob
FEAT_SEED = 402653  # frozen 3D-feature embedding seed


class GenerationError(RuntimeError):
    """Scene construction could not satisfy the placement constraints."""


class UnrealizableQuery(GenerationError):
    """The scene cannot host a query of the requested category."""


@dataclass(frozen=True)
class SceneObject:
    box: Box3
    class_id: int
    color_id: int


@dataclass(frozen=True)
class QueryRecord:
    """Templated description with exact target semantics."""

    tokens: tuple[int, ...]
    target_indices: tuple[int, ...]
    kind: str
    target_class: int

    def words(self) -> list[str]:
        return [WORDS[t] for t in self.tokens]


@dataclass
class Scene:
    scene_id: str
    seed: int
    objects: list[SceneObject]
    points: np.ndarray  # (P, 6): xyz + rgb
    candidates: CandidateSet | None = None
    queries: list[QueryRecord] | None = None

    def class_inventory(self) -> tuple[int, ...]:
        return tuple(o.class_id for o in self.objects)

    def gt_boxes(self, query: QueryRecord) -> list[Box3]:
        return [self.objects[i].box for i in query.target_indices]


def _sample_box(rng: np.random.Generator, class_name: str, room) -> Box3:
    lo, hi = CLASS_SIZE_RANGES[class_name]
    size = rng.uniform(lo, hi, 3)
    size[2] = min(size[2], room[2] * 0.6)
    margin = size / 2.0
    center = np.array([
        rng.uniform(margin[0], room[0] - margin[0]),
        rng.uniform(margin[1], room[1] - margin[1]),
        rng.uniform(margin[2], room[2] - margin[2]),
    ])
    return Box3(center=center, size=size)


def _sample_points(objects: list[SceneObject], seed: int, points_per_object: int) -> np.ndarray:
    rng = np.random.default_rng([seed, 1])
    chunks = []
    for obj in objects:
        xyz = rng.uniform(obj.box.min_corner, obj.box.max_corner, (points_per_object, 3))
        rgb = np.tile(np.array(COLOR_RGB[COLORS[obj.color_id]]), (points_per_object, 1))
        chunks.append(np.concatenate([xyz, rgb], axis=1))
    return np.concatenate(chunks, axis=0)


def gen_scene(seed: int, cfg: DataConfig) -> Scene:
    """Build one room, deterministic per seed.

    Object roster by construction: a duplicated class (two objects of one
    color plus one of another) for multi-target and distractor queries, a
    unique class, and ``n_extra_objects`` filler classes. Ground-truth boxes
    are rejection-sampled to be pairwise non-overlapping.
    """
    rng = np.random.default_rng([seed, 0])
    class_ids = rng.permutation(len(CLASSES))
    dup_class = int(class_ids[0])
    unique_class = int(class_ids[1])
    extra_classes = [int(c) for c in class_ids[2:2 + cfg.n_extra_objects]]
    color_ids = rng.permutation(len(COLORS))
    color_a, color_b, color_c = int(color_ids[0]), int(color_ids[1]), int(color_ids[2])

    roster = [
        (dup_class, color_a), (dup_class, color_a), (dup_class, color_b),
        (unique_class, color_c),
    ]
    roster += [(c, int(rng.integers(0, len(COLORS)))) for c in extra_classes]

    objects: list[SceneObject] = []
    for class_id, color_id in roster:
        placed = None
        for _ in range(200):
            box = _sample_box(rng, CLASSES[class_id], cfg.room)
            if all(iou(box, o.box) == 0.0 for o in objects):
                placed = box
                break
        if placed is None:
            raise GenerationError(
                f"could not place a {CLASSES[class_id]} after 200 tries (seed {seed})")
        objects.append(SceneObject(box=placed, class_id=class_id, color_id=color_id))

    points = _sample_points(objects, seed, cfg.points_per_object)
    return Scene(scene_id=f"s{seed:06d}", seed=seed, objects=objects, points=points)


def _feature_embedding(d3: int) -> np.ndarray:
    dim_in = len(CLASSES) + 3 + 3
    rng = np.random.default_rng(FEAT_SEED)
    return rng.normal(0.0, 1.0, (dim_in, d3)) / np.sqrt(dim_in)


def candidate_features(boxes: list[Box3], class_ids: list[int | None], room,
                       d3: int) -> np.ndarray:
    """Detector-style 3D features: embedded (class one-hot, size, center offset)."""
    embed = _feature_embedding(d3)
    room_center = np.asarray(room) / 2.0
    rows = []
    for box, cid in zip(boxes, class_ids):
        onehot = np.zeros(len(CLASSES))
        if cid is not None:
            onehot[cid] = 1.0
        rows.append(np.concatenate([onehot, box.size, box.center - room_center]))
    return np.stack(rows) @ embed


def _jitter(rng, box: Box3, cfg: DataConfig) -> Box3:
    center = box.center + rng.normal(0.0, cfg.center_jitter, 3) * box.size
    size = np.maximum(box.size * (1.0 + rng.normal(0.0, cfg.size_jitter, 3)), 0.05)
    return Box3(center=center, size=size)


def simulate_detector(scene: Scene, seed: int, cfg: DataConfig) -> CandidateSet:
    """Jittered ground-truth copies plus false positives, with IoU-correlated scores.

    The first copy of each object is re-drawn until it reaches
    ``cfg.guarantee_iou`` against its source, so every ground-truth box stays
    reachable by at least one candidate.
    """
    rng = np.random.default_rng([seed, 2])
    boxes: list[Box3] = []
    class_ids: list[int | None] = []
    for obj in scene.objects:
        n_copies = int(rng.integers(1, cfg.max_copies + 1))
        for c in range(n_copies):
            cand = _jitter(rng, obj.box, cfg)
            if c == 0:
                for _ in range(30):
                    if iou(cand, obj.box) >= cfg.guarantee_iou:
                        break
                    cand = _jitter(rng, obj.box, cfg)
            boxes.append(cand)
            class_ids.append(obj.class_id)
    for _ in range(cfg.false_positives):
        fp = _sample_box(rng, CLASSES[int(rng.integers(0, len(CLASSES)))], cfg.room)
        boxes.append(fp)
        class_ids.append(None)

    gt = [o.box for o in scene.objects]
    scores = np.array([
        max(iou(b, g) for g in gt) + cfg.score_noise * rng.normal()
        for b in boxes
    ])
    scores = np.clip(scores, 1e-3, 1.0 - 1e-3)
    feats = candidate_features(boxes, class_ids, cfg.room, cfg.d3)
    feats = feats + cfg.feat_noise * rng.normal(0.0, 1.0, feats.shape)
    return CandidateSet(boxes=boxes, scores=scores, feats3d=feats)


def candidates_from_gt(scene: Scene, d3: int, room) -> CandidateSet:
    """Given-proposals protocol: the ground-truth boxes are the candidates."""
    boxes = [o.box for o in scene.objects]
    class_ids = [o.class_id for o in scene.objects]
    return CandidateSet(
        boxes=boxes,
        scores=np.full(len(boxes), 1.0 - 1e-3),
        feats3d=candidate_features(boxes, class_ids, room, d3),
    )


def _ids(*words: str) -> tuple[int, ...]:
    return tuple(WORD_TO_ID[w] for w in words)


def gen_query(scene: Scene, kind: str, seed: int, cfg: DataConfig) -> QueryRecord:
    """Templated query whose ground-truth target set realizes ``kind``."""
    rng = np.random.default_rng([seed, 3])
    by_class: dict[int, list[int]] = {}
    by_class_color: dict[tuple[int, int], list[int]] = {}
    for i, obj in enumerate(scene.objects):
        by_class.setdefault(obj.class_id, []).append(i)
        by_class_color.setdefault((obj.class_id, obj.color_id), []).append(i)

    def pick(options):
        if not options:
            raise UnrealizableQuery(f"scene {scene.scene_id} cannot realize {kind!r}")
        return options[int(rng.integers(0, len(options)))]

    if kind == ZT_NO_D:
        cls = pick([c for c in range(len(CLASSES)) if c not in by_class])
        return QueryRecord(tokens=_ids("there", "is", "no", CLASSES[cls]),
                           target_indices=(), kind=kind, target_class=cls)

    if kind == ZT_D:
        options = [
            (cls, col)
            for cls in by_class
            for col in range(len(COLORS))
            if (cls, col) not in by_class_color
        ]
        cls, col = pick(options)
        return QueryRecord(tokens=_ids("the", COLORS[col], CLASSES[cls]),
                           target_indices=(), kind=kind, target_class=cls)

    if kind == ST_NO_D:
        cls = pick([c for c, members in by_class.items() if len(members) == 1])
        return QueryRecord(tokens=_ids("the", CLASSES[cls]),
                           target_indices=(by_class[cls][0],), kind=kind, target_class=cls)

    if kind == ST_D:
        crowded = [c for c, members in by_class.items() if len(members) >= 2]
        spatial_options = [
            (cls, anchor) for cls in crowded for anchor in by_class if anchor != cls
        ]
        color_options = [
            (cls, col) for (cls, col), members in by_class_color.items()
            if len(members) == 1 and len(by_class[cls]) >= 2
        ]
        use_spatial = rng.uniform() < cfg.spatial_fraction
        if use_spatial and spatial_options or not color_options:
            cls, anchor = pick(spatial_options)
            anchors = np.stack([scene.objects[i].box.center for i in by_class[anchor]])
            dists = [
                np.linalg.norm(anchors - scene.objects[i].box.center, axis=1).min()
                for i in by_class[cls]
            ]
            target = by_class[cls][int(np.argmin(dists))]
            return QueryRecord(
                tokens=_ids("the", CLASSES[cls], "near", "the", CLASSES[anchor]),
                target_indices=(target,), kind=kind, target_class=cls)
        cls, col = pick(color_options)
        return QueryRecord(tokens=_ids("the", COLORS[col], CLASSES[cls]),
                           target_indices=(by_class_color[(cls, col)][0],),
                           kind=kind, target_class=cls)

    if kind == MT:
        options = [
            (cls, col) for (cls, col), members in by_class_color.items() if len(members) >= 2
        ]
        if options:
            cls, col = pick(options)
            return QueryRecord(tokens=_ids("the", COLORS[col], CLASSES[cls]),
                               target_indices=tuple(by_class_color[(cls, col)]),
                               kind=kind, target_class=cls)
        cls = pick([c for c, members in by_class.items() if len(members) >= 2])
        return QueryRecord(tokens=_ids("the", CLASSES[cls]),
                           target_indices=tuple(by_class[cls]), kind=kind, target_class=cls)

    raise ValueError(f"unknown query kind {kind!r}")


def toy_text_encode(tokens, d: int) -> np.ndarray:
    """Fixed pseudo-random unit vector per token id; deterministic, non-trainable."""
    out = np.zeros((len(tokens), d))
    for i, t in enumerate(tokens):
        t = int(t)
        if not 0 <= t < len(WORDS):
            raise ValueError(f"unknown token id {t}")
        v = np.random.default_rng([TEXT_SEED, t, d]).normal(0.0, 1.0, d)
        out[i] = v / np.linalg.norm(v)
    return out


def generate_dataset(base_seed: int, n_scenes: int, cfg: DataConfig,
                     kinds: tuple[str, ...] | None = None) -> list[Scene]:
    """Scenes with simulated detections and one query per requested kind."""
    kinds = tuple(kinds) if kinds is not None else tuple(cfg.kinds)
    scenes = []
    for i in range(n_scenes):
        seed = base_seed + i
        scene = gen_scene(seed, cfg)
        scene.candidates = simulate_detector(scene, seed, cfg)
        scene.queries = [
            gen_query(scene, kind, seed * 41 + k, cfg) for k, kind in enumerate(kinds)
        ]
        scenes.append(scene)
    return scenes


def flatten_samples(scenes: list[Scene]) -> list[tuple[Scene, QueryRecord]]:
    return [(s, q) for s in scenes for q in (s.queries or [])]


def write_dataset(out_dir, scenes: list[Scene], cfg: DataConfig) -> None:
    """JSONL scene records, a feats3d sidecar array, and generation metadata."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    feat_rows = []
    with open(out / "scenes.jsonl", "w") as fh:
        for scene in scenes:
            cands = []
            for i, box in enumerate(scene.candidates.boxes):
                cands.append({
                    **box.to_dict(),
                    "score": float(scene.candidates.scores[i]),
                    "feat_ref": len(feat_rows),
                })
                feat_rows.append(scene.candidates.feats3d[i])
            record = {
                "schema": 1,
                "id": scene.scene_id,
                "seed": scene.seed,
                "objects": [
                    {**o.box.to_dict(), "class": o.class_id, "color": o.color_id}
                    for o in scene.objects
                ],
                "candidates": cands,
                "queries": [
                    {
                        "tokens": list(q.tokens),
                        "targets": list(q.target_indices),
                        "kind": q.kind,
                        "target_class": q.target_class,
                    }
                    for q in (scene.queries or [])
                ],
            }
            fh.write(json.dumps(record, sort_keys=True) + "\n")
    np.save(out / "feats.npy", np.stack(feat_rows))
    with open(out / "meta.json", "w") as fh:
        json.dump({"schema": 1, "n_scenes": len(scenes), "data_config": cfg.to_dict()},
                  fh, indent=2, sort_keys=True)
        fh.write("\n")


def read_dataset(in_dir) -> tuple[list[Scene], DataConfig]:
    """Load a dataset directory; scene points are regenerated from the stored seeds."""
    src = Path(in_dir)
    with open(src / "meta.json") as fh:
        meta = json.load(fh)
    if meta.get("schema") != 1:
        raise ValueError(f"unsupported dataset schema {meta.get('schema')!r}")
    cfg = DataConfig.from_dict(meta["data_config"])
    feats = np.load(src / "feats.npy")
    scenes = []
    with open(src / "scenes.jsonl") as fh:
        for line in fh:
            rec = json.loads(line)
            if rec.get("schema") != 1:
                raise ValueError("unsupported scene schema")
            objects = [
                SceneObject(box=Box3.from_dict(o), class_id=o["class"], color_id=o["color"])
                for o in rec["objects"]
            ]
            boxes = [Box3.from_dict(c) for c in rec["candidates"]]
            scores = np.array([c["score"] for c in rec["candidates"]])
            f3d = np.stack([feats[c["feat_ref"]] for c in rec["candidates"]])
            queries = [
                QueryRecord(tokens=tuple(q["tokens"]), target_indices=tuple(q["targets"]),
                            kind=q["kind"], target_class=q["target_class"])
                for q in rec["queries"]
            ]
            scene = Scene(
                scene_id=rec["id"], seed=rec["seed"], objects=objects,
                points=_sample_points(objects, rec["seed"], cfg.points_per_object),
                candidates=CandidateSet(boxes=boxes, scores=scores, feats3d=f3d),
                queries=queries,
            )
            scenes.append(scene)
    return scenes, cfg
