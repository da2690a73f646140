"""Language-conditioned spatial fusion.

A stack of transformer layers over per-proposal features. Each layer runs a
distance-aware self-attention block whose logits blend scaled dot-product
scores with an inverse-distance matrix, gated per object by a score predicted
from the sentence feature, then a cross-attention block over the contextualized
word features. A small MLP head turns the result into per-proposal
probabilities.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .autodiff import ops
from .autodiff.tensor import DTensor, ParamStore, Tape
from .geometry import Box3, DistanceMatrix


@dataclass
class QueryEmbedding:
    """Word-feature matrix for one description plus its pooled sentence feature."""

    word_features: np.ndarray
    sentence_feature: DTensor | None = None

    def __post_init__(self):
        wf = np.asarray(self.word_features, dtype=np.float64)
        if wf.ndim != 2 or wf.shape[0] < 1:
            raise ValueError("word_features must be (L, d) with L >= 1")
        self.word_features = wf


@dataclass
class SpatialScores:
    """Per-object gates in (0, 1) and the row-constant matrix built from them."""

    beta: DTensor  # (N, 1)
    matrix: DTensor  # (N, N), row i constant at beta[i]


@dataclass
class LayerParams:
    wq: DTensor
    wk: DTensor
    wv: DTensor
    cq: DTensor
    ck: DTensor
    cv: DTensor
    beta_w: DTensor
    beta_b: DTensor
    ln1_g: DTensor
    ln1_b: DTensor
    ln2_g: DTensor
    ln2_b: DTensor


@dataclass
class FusionParams:
    """All trainable fusion tensors, registered in a ParamStore."""

    d_in: int
    d: int
    layers: list[LayerParams] = field(default_factory=list)
    word_wq: DTensor | None = None
    word_wk: DTensor | None = None
    word_wv: DTensor | None = None
    pool_w: DTensor | None = None
    pool_b: DTensor | None = None
    head_w1: DTensor | None = None
    head_b1: DTensor | None = None
    head_w2: DTensor | None = None
    head_b2: DTensor | None = None

    @classmethod
    def create(cls, store: ParamStore, d_in: int, d: int, n_layers: int,
               rng: np.random.Generator) -> "FusionParams":
        if d_in != d:
            raise ValueError(
                f"residual blocks need matching dims, got d_in={d_in}, d={d}"
            )
        if n_layers < 1:
            raise ValueError("need at least one fusion layer")

        def w(name, fan_in, fan_out):
            bound = 1.0 / np.sqrt(fan_in)
            return store.register(name, rng.uniform(-bound, bound, (fan_in, fan_out)))

        fp = cls(d_in=d_in, d=d)
        for i in range(n_layers):
            p = f"fusion.layer{i}"
            fp.layers.append(LayerParams(
                wq=w(f"{p}.wq", d_in, d),
                wk=w(f"{p}.wk", d_in, d),
                wv=w(f"{p}.wv", d_in, d),
                cq=w(f"{p}.cq", d, d),
                ck=w(f"{p}.ck", d, d),
                cv=w(f"{p}.cv", d, d),
                beta_w=w(f"{p}.beta_w", d + d_in, 1),
                beta_b=store.register(f"{p}.beta_b", np.zeros(1)),
                ln1_g=store.register(f"{p}.ln1_g", np.ones(d_in)),
                ln1_b=store.register(f"{p}.ln1_b", np.zeros(d_in)),
                ln2_g=store.register(f"{p}.ln2_g", np.ones(d)),
                ln2_b=store.register(f"{p}.ln2_b", np.zeros(d)),
            ))
        fp.word_wq = w("fusion.word_wq", d, d)
        fp.word_wk = w("fusion.word_wk", d, d)
        fp.word_wv = w("fusion.word_wv", d, d)
        fp.pool_w = w("fusion.pool_w", d, 1)
        fp.pool_b = store.register("fusion.pool_b", np.zeros(1))
        fp.head_w1 = w("fusion.head_w1", d, d)
        fp.head_b1 = store.register("fusion.head_b1", np.zeros(d))
        fp.head_w2 = w("fusion.head_w2", d, 1)
        fp.head_b2 = store.register("fusion.head_b2", np.zeros(1))
        return fp


@dataclass
class FusionResult:
    probs: DTensor  # (N, 1)
    logits: DTensor  # (N, 1)
    features: DTensor  # (N, d): post-stack object features
    query: QueryEmbedding


def pool_sentence(tape: Tape | None, word_features: DTensor, params: FusionParams) -> DTensor:
    """Sentence feature: softmax-weighted sum of word features, as a (1, d) row."""
    logits = ops.linear(tape, word_features, params.pool_w, params.pool_b)  # (L, 1)
    weights = ops.softmax_rows(tape, ops.transpose(tape, logits))  # (1, L)
    return ops.matmul(tape, weights, word_features)


def spatial_scores(tape: Tape | None, feats: DTensor, sentence: DTensor,
                   layer: LayerParams) -> SpatialScores:
    """Per-object gate from (sentence || object feature), broadcast to a row-constant matrix."""
    n = feats.values.shape[0]
    stacked = ops.hconcat(tape, ops.tile_rows(tape, sentence, n), feats)
    beta = ops.sigmoid(tape, ops.linear(tape, stacked, layer.beta_w, layer.beta_b))
    matrix = ops.matmul(tape, beta, ops.const(np.ones((1, n))))
    return SpatialScores(beta=beta, matrix=matrix)


def spatial_attention(tape: Tape | None, feats: DTensor, sentence: DTensor,
                      distances: DistanceMatrix, layer: LayerParams,
                      beta_override: np.ndarray | None = None,
                      normalize_distances: bool = False) -> DTensor:
    """Distance-blended self-attention over object features.

    Row logits are (1 - B) * QK^T/sqrt(d) + B * D, softmax-normalized, applied
    to V. ``beta_override`` pins the per-object gates (used by the reduction
    tests and the no-spatial ablation). ``normalize_distances`` optionally
    rescales each row of D by its max; off by default since raw clamped
    inverse distances are the reference behavior.
    """
    n = feats.values.shape[0]
    d = layer.wq.values.shape[1]
    dvals = distances.values
    if dvals.shape != (n, n):
        raise ValueError(f"distance matrix shape {dvals.shape} != ({n}, {n})")
    if normalize_distances:
        dvals = dvals / dvals.max(axis=1, keepdims=True)
    q = ops.matmul(tape, feats, layer.wq)
    k = ops.matmul(tape, feats, layer.wk)
    v = ops.matmul(tape, feats, layer.wv)
    scores = ops.scale(tape, ops.matmul(tape, q, ops.transpose(tape, k)), 1.0 / np.sqrt(d))
    if beta_override is not None:
        bmat = ops.const(np.broadcast_to(
            np.asarray(beta_override, dtype=np.float64).reshape(n, 1), (n, n)).copy())
    else:
        bmat = spatial_scores(tape, feats, sentence, layer).matrix
    ones = ops.const(np.ones((n, n)))
    logits = ops.add(tape,
                     ops.mul(tape, ops.sub(tape, ones, bmat), scores),
                     ops.mul(tape, bmat, ops.const(dvals)))
    return ops.matmul(tape, ops.softmax_rows(tape, logits), v)


def word_self_attention(tape: Tape | None, word_features: DTensor,
                        params: FusionParams) -> DTensor:
    """Single-head self-attention over word features (no residual)."""
    d = params.word_wq.values.shape[1]
    q = ops.matmul(tape, word_features, params.word_wq)
    k = ops.matmul(tape, word_features, params.word_wk)
    v = ops.matmul(tape, word_features, params.word_wv)
    att = ops.softmax_rows(tape, ops.scale(tape, ops.matmul(tape, q, ops.transpose(tape, k)),
                                           1.0 / np.sqrt(d)))
    return ops.matmul(tape, att, v)


def cross_attention(tape: Tape | None, obj_feats: DTensor, word_feats: DTensor,
                    layer: LayerParams) -> DTensor:
    """Objects attend over contextualized words: softmax(Qc Kc^T / sqrt(d)) Vc."""
    d = layer.cq.values.shape[1]
    q = ops.matmul(tape, obj_feats, layer.cq)
    k = ops.matmul(tape, word_feats, layer.ck)
    v = ops.matmul(tape, word_feats, layer.cv)
    att = ops.softmax_rows(tape, ops.scale(tape, ops.matmul(tape, q, ops.transpose(tape, k)),
                                           1.0 / np.sqrt(d)))
    return ops.matmul(tape, att, v)


def fusion_forward(tape: Tape | None, feats: DTensor, word_features: np.ndarray,
                   distances: DistanceMatrix, params: FusionParams,
                   use_spatial_attention: bool = True,
                   normalize_distances: bool = False) -> FusionResult:
    """Full fusion pass: per-proposal probability of being referred to.

    Layers are pre-normalized with residual connections around both blocks.
    ``use_spatial_attention=False`` pins every gate to zero, reducing each
    block to plain scaled dot-product attention (the ablation baseline).
    """
    wf = ops.const(np.asarray(word_features, dtype=np.float64))
    n = feats.values.shape[0]
    query = QueryEmbedding(word_features=wf.values)
    g = pool_sentence(tape, wf, params)
    query.sentence_feature = g
    contextual = word_self_attention(tape, wf, params)
    x = feats
    override = None if use_spatial_attention else np.zeros(n)
    for layer in params.layers:
        h = ops.layer_norm_rows(tape, x, layer.ln1_g, layer.ln1_b)
        x = ops.add(tape, x, spatial_attention(
            tape, h, g, distances, layer,
            beta_override=override, normalize_distances=normalize_distances))
        h = ops.layer_norm_rows(tape, x, layer.ln2_g, layer.ln2_b)
        x = ops.add(tape, x, cross_attention(tape, h, contextual, layer))
    hidden = ops.tanh(tape, ops.linear(tape, x, params.head_w1, params.head_b1))
    logits = ops.linear(tape, hidden, params.head_w2, params.head_b2)
    probs = ops.sigmoid(tape, logits)
    return FusionResult(probs=probs, logits=logits, features=x, query=query)


def predict_multi(probs, boxes: list[Box3], tau_pred: float) -> list[int]:
    """Indices of boxes whose probability exceeds tau_pred; may be empty."""
    if not 0.0 < tau_pred < 1.0:
        raise ValueError(f"tau_pred must lie in (0, 1), got {tau_pred}")
    p = np.asarray(probs, dtype=np.float64).reshape(-1)
    if p.shape[0] != len(boxes):
        raise ValueError("probability/box count mismatch")
    return [i for i in range(len(boxes)) if p[i] > tau_pred]


def predict_single(probs, boxes: list[Box3]) -> int:
    """Index of the most likely box; ties go to the lower index."""
    p = np.asarray(probs, dtype=np.float64).reshape(-1)
    if p.shape[0] != len(boxes) or len(boxes) < 1:
        raise ValueError("need at least one box with matching probabilities")
    return int(np.argmax(p))


def spatial_attention_values(f, wq, wk, wv, dmat, beta) -> np.ndarray:
    """Run the production attention op on plain arrays with pinned gates."""
    layer = LayerParams(
        wq=DTensor(wq), wk=DTensor(wk), wv=DTensor(wv),
        cq=DTensor(wq), ck=DTensor(wk), cv=DTensor(wv),
        beta_w=DTensor(np.zeros((2 * f.shape[1], 1))), beta_b=DTensor(np.zeros(1)),
        ln1_g=DTensor(np.ones(f.shape[1])), ln1_b=DTensor(np.zeros(f.shape[1])),
        ln2_g=DTensor(np.ones(f.shape[1])), ln2_b=DTensor(np.zeros(f.shape[1])),
    )
    out = spatial_attention(None, DTensor(f), DTensor(np.zeros((1, f.shape[1]))),
                            DistanceMatrix(values=np.asarray(dmat, dtype=np.float64)),
                            layer, beta_override=np.asarray(beta, dtype=np.float64))
    return out.values
