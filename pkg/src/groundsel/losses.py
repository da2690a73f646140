"""Training losses: reference (multi/single), symmetric contrastive, proposal-count penalty."""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from .autodiff import ops
from .autodiff.tensor import DTensor, Tape

log = logging.getLogger(__name__)


@dataclass
class LossConfig:
    """Loss weights and thresholds.

    ``lambda_det`` exists for config fidelity with the full pipeline but is
    unused here: the detector backbone is simulated, so there is no detection
    term in the implemented total.
    """

    lambda_ref: float = 1.0
    lambda_ctr: float = 1.0
    lambda_dyn: float = 5.0
    lambda_det: float = 1.0
    tau_train: float = 0.25
    temperature: float = 0.07

    def __post_init__(self):
        for name in ("lambda_ref", "lambda_ctr", "lambda_dyn", "lambda_det"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be >= 0")
        if not 0.0 < self.tau_train < 1.0:
            raise ValueError("tau_train must lie in (0, 1)")
        if self.temperature <= 0:
            raise ValueError("temperature must be > 0")


def loss_dyn(tape: Tape | None, alphas: DTensor) -> DTensor:
    """Expected proposal count: plain sum of all gate probabilities, pre-filtering."""
    return ops.total(tape, alphas)


def loss_ref_multi(tape: Tape | None, probs: DTensor, labels) -> DTensor:
    """Mean binary cross-entropy of proposal probabilities against matched labels."""
    return ops.bce(tape, probs, np.asarray(labels, dtype=np.float64))


def loss_ref_single(tape: Tape | None, logits: DTensor, target: int | None) -> DTensor:
    """Cross-entropy against the matched proposal; no match contributes zero."""
    if target is None:
        return ops.const(np.asarray(0.0))
    flat = logits if logits.values.ndim == 1 else ops.transpose(tape, logits)
    return ops.cross_entropy(tape, flat, [int(target)])


def loss_contrastive(tape: Tape | None, object_pooled: list[DTensor],
                     sentences: list[DTensor], temperature: float) -> DTensor:
    """Symmetric in-batch InfoNCE over cosine similarities.

    Positives are the matched (object, sentence) pairs from the same
    scene-description sample; every other in-batch pairing is a negative.
    A batch of one has no negatives and contributes zero.
    """
    if temperature <= 0:
        raise ValueError("temperature must be > 0")
    if len(object_pooled) != len(sentences):
        raise ValueError("object/sentence batch size mismatch")
    if len(object_pooled) < 2:
        log.debug("contrastive loss skipped: batch of %d has no negatives", len(object_pooled))
        return ops.const(np.asarray(0.0))
    obj = ops.l2_normalize_rows(tape, ops.vstack(tape, object_pooled))
    sen = ops.l2_normalize_rows(tape, ops.vstack(tape, sentences))
    sim = ops.scale(tape, ops.matmul(tape, obj, ops.transpose(tape, sen)), 1.0 / temperature)
    targets = np.arange(len(object_pooled))
    fwd = ops.cross_entropy(tape, sim, targets)
    bwd = ops.cross_entropy(tape, ops.transpose(tape, sim), targets)
    return ops.scale(tape, ops.add(tape, fwd, bwd), 0.5)


def loss_total(tape: Tape | None, ref: DTensor, ctr: DTensor, dyn: DTensor,
               cfg: LossConfig) -> DTensor:
    """Weighted sum of the implemented loss terms."""
    return ops.add(
        tape,
        ops.add(tape, ops.scale(tape, ref, cfg.lambda_ref), ops.scale(tape, ctr, cfg.lambda_ctr)),
        ops.scale(tape, dyn, cfg.lambda_dyn),
    )
