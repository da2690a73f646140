"""Run configuration: a single declarative record covering data, model, and training."""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field

MODES = ("multi", "single", "given-proposals")
TAU_PRED_GRID = (0.05, 0.1, 0.15, 0.2, 0.25)


@dataclass
class RunConfig:
    """Every knob in one place; see README for the key-by-key description."""

    # optimization
    lr: float = 5e-4
    batch_size: int = 4
    epochs: int = 100
    weight_decay: float = 0.01
    seed: int = 0
    # loss weights / thresholds
    lambda_ref: float = 1.0
    lambda_ctr: float = 1.0
    lambda_dyn: float = 5.0
    tau_train: float = 0.25
    tau_f: float = 0.5
    tau_nms: float = 0.4
    tau_pred: float = 0.25
    temperature: float = 0.07
    # dimensions
    d: int = 128
    d_o: int = 128
    d2: int = 32
    d3: int = 32
    layers: int = 2
    pose_hidden: int = 16
    # rendering
    views: int = 4
    render_res: int = 32
    # behavior
    mode: str = "multi"
    use_spatial_attention: bool = True
    normalize_distances: bool = False
    eval_every: int = 1
    # data generation (train/val from disjoint seed bases)
    data_seed: int = 1000
    val_seed: int = 2000

    def __post_init__(self):
        self.validate()

    def validate(self) -> None:
        for name in ("tau_train", "tau_f", "tau_pred"):
            v = getattr(self, name)
            if not 0.0 < v < 1.0:
                raise ValueError(f"{name} must lie in (0, 1), got {v}")
        if not 0.0 <= self.tau_nms <= 1.0:
            raise ValueError(f"tau_nms must lie in [0, 1], got {self.tau_nms}")
        if self.mode not in MODES:
            raise ValueError(f"mode must be one of {MODES}, got {self.mode!r}")
        if self.d != self.d_o:
            raise ValueError("d and d_o must match (residual fusion blocks)")
        for name in ("batch_size", "epochs", "d", "d2", "d3", "layers", "views",
                     "render_res", "pose_hidden"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be >= 1")

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "RunConfig":
        known = {f for f in cls.__dataclass_fields__}
        unknown = set(d) - known
        if unknown:
            raise ValueError(f"unknown config keys: {sorted(unknown)}")
        return cls(**d)

    def save(self, path) -> None:
        with open(path, "w") as fh:
            json.dump(self.to_dict(), fh, indent=2, sort_keys=True)
            fh.write("\n")

    @classmethod
    def load(cls, path) -> "RunConfig":
        with open(path) as fh:
            return cls.from_dict(json.load(fh))


@dataclass
class DataConfig:
    """Synthetic scene/query generation knobs."""

    n_extra_objects: int = 1  # beyond the 4 structured ones
    points_per_object: int = 150
    center_jitter: float = 0.04  # relative to box size
    size_jitter: float = 0.05
    score_noise: float = 0.05
    feat_noise: float = 0.02
    false_positives: int = 2
    max_copies: int = 3
    guarantee_iou: float = 0.5
    d3: int = 32
    room: tuple = (6.0, 6.0, 3.0)
    kinds: tuple = field(default_factory=lambda: ("ZT w/o D", "ZT w/D", "ST w/o D", "ST w/D", "MT"))
    spatial_fraction: float = 0.5  # share of ST w/D queries using the "near" template

    def to_dict(self) -> dict:
        d = asdict(self)
        d["room"] = list(self.room)
        d["kinds"] = list(self.kinds)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "DataConfig":
        d = dict(d)
        if "room" in d:
            d["room"] = tuple(d["room"])
        if "kinds" in d:
            d["kinds"] = tuple(d["kinds"])
        return cls(**d)
