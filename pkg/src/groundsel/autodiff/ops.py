"""Differentiable ops over DTensors.

Every op takes the recording tape first (None disables recording) and returns
a fresh DTensor. Gradients accumulate additively into the inputs' .grad slots.
"""

from __future__ import annotations

import numpy as np

from .tensor import DTensor, Tape

PROB_CLAMP = 1e-7  # probability floor/ceiling inside the losses


def const(values) -> DTensor:
    return DTensor(values, requires_grad=False)


def _as_dt(x) -> DTensor:
    return x if isinstance(x, DTensor) else const(x)


def _acc(t: DTensor, g: np.ndarray) -> None:
    if not t.requires_grad:
        return
    if t.grad is None:
        t.grad = np.zeros_like(t.values)
    t.grad += g


def _emit(tape: Tape | None, inputs: tuple[DTensor, ...], values, backward) -> DTensor:
    out = DTensor(values, requires_grad=any(t.requires_grad for t in inputs))
    if tape is not None and out.requires_grad:
        tape.record(inputs, out, backward)
    return out


def add(tape, a, b) -> DTensor:
    """Elementwise sum; shapes must match."""
    a, b = _as_dt(a), _as_dt(b)
    if a.values.shape != b.values.shape:
        raise ValueError(f"add shape mismatch: {a.shape} vs {b.shape}")

    def backward(g):
        _acc(a, g)
        _acc(b, g)

    return _emit(tape, (a, b), a.values + b.values, backward)


def sub(tape, a, b) -> DTensor:
    a, b = _as_dt(a), _as_dt(b)
    if a.values.shape != b.values.shape:
        raise ValueError(f"sub shape mismatch: {a.shape} vs {b.shape}")

    def backward(g):
        _acc(a, g)
        _acc(b, -g)

    return _emit(tape, (a, b), a.values - b.values, backward)


def mul(tape, a, b) -> DTensor:
    """Elementwise (Hadamard) product; shapes must match."""
    a, b = _as_dt(a), _as_dt(b)
    if a.values.shape != b.values.shape:
        raise ValueError(f"mul shape mismatch: {a.shape} vs {b.shape}")
    av, bv = a.values, b.values

    def backward(g):
        _acc(a, g * bv)
        _acc(b, g * av)

    return _emit(tape, (a, b), av * bv, backward)


def scale(tape, a, c: float) -> DTensor:
    """Multiply by a python constant."""
    a = _as_dt(a)
    c = float(c)

    def backward(g):
        _acc(a, g * c)

    return _emit(tape, (a,), a.values * c, backward)


def matmul(tape, a, b) -> DTensor:
    a, b = _as_dt(a), _as_dt(b)
    if a.values.ndim != 2 or b.values.ndim != 2 or a.values.shape[1] != b.values.shape[0]:
        raise ValueError(f"matmul shape mismatch: {a.shape} @ {b.shape}")
    av, bv = a.values, b.values

    def backward(g):
        _acc(a, g @ bv.T)
        _acc(b, av.T @ g)

    return _emit(tape, (a, b), av @ bv, backward)


def transpose(tape, a) -> DTensor:
    a = _as_dt(a)

    def backward(g):
        _acc(a, g.T)

    return _emit(tape, (a,), a.values.T.copy(), backward)


def linear(tape, x, w, b) -> DTensor:
    """Affine map x @ w + b with x: (N, in), w: (in, out), b: (out,)."""
    x, w, b = _as_dt(x), _as_dt(w), _as_dt(b)
    xv, wv = x.values, w.values
    if xv.ndim != 2 or wv.ndim != 2 or xv.shape[1] != wv.shape[0]:
        raise ValueError(f"linear shape mismatch: {x.shape} @ {w.shape}")
    if b.values.shape != (wv.shape[1],):
        raise ValueError(f"linear bias shape {b.shape} != ({wv.shape[1]},)")

    def backward(g):
        _acc(x, g @ wv.T)
        _acc(w, xv.T @ g)
        _acc(b, g.sum(axis=0))

    return _emit(tape, (x, w, b), xv @ wv + b.values, backward)


def sigmoid(tape, x) -> DTensor:
    """Elementwise logistic; overflow-safe at large |x|."""
    x = _as_dt(x)
    v = x.values
    out = np.empty_like(v)
    pos = v >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-v[pos]))
    ev = np.exp(v[~pos])
    out[~pos] = ev / (1.0 + ev)

    def backward(g):
        _acc(x, g * out * (1.0 - out))

    return _emit(tape, (x,), out, backward)


def tanh(tape, x) -> DTensor:
    x = _as_dt(x)
    out = np.tanh(x.values)

    def backward(g):
        _acc(x, g * (1.0 - out * out))

    return _emit(tape, (x,), out, backward)


def softmax_rows(tape, x) -> DTensor:
    """Row-stochastic softmax, stabilized by row-max subtraction."""
    x = _as_dt(x)
    v = x.values
    if v.ndim != 2:
        raise ValueError("softmax_rows expects a 2-D input")
    shifted = v - v.max(axis=1, keepdims=True)
    e = np.exp(shifted)
    out = e / e.sum(axis=1, keepdims=True)

    def backward(g):
        inner = (g * out).sum(axis=1, keepdims=True)
        _acc(x, out * (g - inner))

    return _emit(tape, (x,), out, backward)


def layer_norm_rows(tape, x, gain, bias, eps: float = 1e-5) -> DTensor:
    """Per-row normalization with learned gain/bias over the feature axis."""
    x, gain, bias = _as_dt(x), _as_dt(gain), _as_dt(bias)
    v = x.values
    if v.ndim != 2:
        raise ValueError("layer_norm_rows expects a 2-D input")
    mu = v.mean(axis=1, keepdims=True)
    var = ((v - mu) ** 2).mean(axis=1, keepdims=True)
    inv = 1.0 / np.sqrt(var + eps)
    xhat = (v - mu) * inv
    gv = gain.values

    def backward(g):
        gx = g * gv
        _acc(
            x,
            inv
            * (gx - gx.mean(axis=1, keepdims=True) - xhat * (gx * xhat).mean(axis=1, keepdims=True)),
        )
        _acc(gain, (g * xhat).sum(axis=0))
        _acc(bias, g.sum(axis=0))

    return _emit(tape, (x, gain, bias), xhat * gv + bias.values, backward)


def l2_normalize_rows(tape, x, eps: float = 1e-12) -> DTensor:
    x = _as_dt(x)
    v = x.values
    norms = np.sqrt((v * v).sum(axis=1, keepdims=True))
    r = np.maximum(norms, eps)
    out = v / r

    def backward(g):
        inner = (g * out).sum(axis=1, keepdims=True)
        gx = np.where(norms > eps, (g - out * inner) / r, g / eps)
        _acc(x, gx)

    return _emit(tape, (x,), out, backward)


def concat(tape, a, b) -> DTensor:
    """1-D concatenation; the gradient splits back into the two halves."""
    a, b = _as_dt(a), _as_dt(b)
    if a.values.ndim != 1 or b.values.ndim != 1:
        raise ValueError("concat expects 1-D inputs")
    na = a.values.shape[0]

    def backward(g):
        _acc(a, g[:na])
        _acc(b, g[na:])

    return _emit(tape, (a, b), np.concatenate([a.values, b.values]), backward)


def hconcat(tape, *parts) -> DTensor:
    """Column-wise concatenation of 2-D blocks with equal row counts."""
    parts = tuple(_as_dt(p) for p in parts)
    widths = []
    for p in parts:
        if p.values.ndim != 2 or p.values.shape[0] != parts[0].values.shape[0]:
            raise ValueError("hconcat expects 2-D blocks with equal row counts")
        widths.append(p.values.shape[1])
    offsets = np.cumsum([0] + widths)

    def backward(g):
        for p, lo, hi in zip(parts, offsets[:-1], offsets[1:]):
            _acc(p, g[:, lo:hi])

    return _emit(tape, parts, np.concatenate([p.values for p in parts], axis=1), backward)


def vstack(tape, rows) -> DTensor:
    """Stack 1-row blocks (shape (d,) or (1, d)) into an (N, d) matrix."""
    rows = tuple(_as_dt(r) for r in rows)
    if not rows:
        raise ValueError("vstack needs at least one row")
    mats = [r.values.reshape(1, -1) for r in rows]

    def backward(g):
        for i, r in enumerate(rows):
            _acc(r, g[i].reshape(r.values.shape))

    return _emit(tape, rows, np.concatenate(mats, axis=0), backward)


def tile_rows(tape, v, n: int) -> DTensor:
    """Repeat a single row n times; the gradient sums back over rows."""
    v = _as_dt(v)
    row = v.values.reshape(1, -1)

    def backward(g):
        _acc(v, g.sum(axis=0).reshape(v.values.shape))

    return _emit(tape, (v,), np.repeat(row, n, axis=0), backward)


def take_rows(tape, x, indices) -> DTensor:
    """Select rows (or 1-D elements) by index; gradient scatter-adds back."""
    x = _as_dt(x)
    idx = np.asarray(indices, dtype=np.intp)

    def backward(g):
        if not x.requires_grad:
            return
        if x.grad is None:
            x.grad = np.zeros_like(x.values)
        np.add.at(x.grad, idx, g)

    return _emit(tape, (x,), x.values[idx].copy(), backward)


def scale_rows(tape, m, v) -> DTensor:
    """Scale row i of m by v[i]; v may be shaped (N,) or (N, 1)."""
    m, v = _as_dt(m), _as_dt(v)
    flat = v.values.reshape(-1)
    if m.values.ndim != 2 or flat.shape[0] != m.values.shape[0]:
        raise ValueError(f"scale_rows shape mismatch: {m.shape} vs {v.shape}")
    mv = m.values

    def backward(g):
        _acc(m, g * flat[:, None])
        _acc(v, (g * mv).sum(axis=1).reshape(v.values.shape))

    return _emit(tape, (m, v), mv * flat[:, None], backward)


def clamp_min(tape, x, floor) -> DTensor:
    """Elementwise max(x, floor); floor may be a scalar or a broadcastable array."""
    x = _as_dt(x)
    fl = np.asarray(floor, dtype=np.float64)
    mask = x.values > fl

    def backward(g):
        _acc(x, g * mask)

    return _emit(tape, (x,), np.maximum(x.values, fl), backward)


def mean(tape, x) -> DTensor:
    x = _as_dt(x)
    n = x.values.size

    def backward(g):
        _acc(x, np.full_like(x.values, g / n))

    return _emit(tape, (x,), np.asarray(x.values.mean()), backward)


def total(tape, x) -> DTensor:
    """Sum of all elements."""
    x = _as_dt(x)

    def backward(g):
        _acc(x, np.full_like(x.values, g))

    return _emit(tape, (x,), np.asarray(x.values.sum()), backward)


def mean_rows(tape, x) -> DTensor:
    """Column means of a 2-D input, kept as a (1, d) row."""
    x = _as_dt(x)
    if x.values.ndim != 2:
        raise ValueError("mean_rows expects a 2-D input")
    n = x.values.shape[0]

    def backward(g):
        _acc(x, np.repeat(g.reshape(1, -1), n, axis=0) / n)

    return _emit(tape, (x,), x.values.mean(axis=0, keepdims=True), backward)


def bce(tape, p, y) -> DTensor:
    """Mean binary cross-entropy; probabilities clamped away from {0, 1}."""
    p = _as_dt(p)
    yv = np.asarray(y, dtype=np.float64).reshape(p.values.shape)
    pc = np.clip(p.values, PROB_CLAMP, 1.0 - PROB_CLAMP)
    inside = (p.values > PROB_CLAMP) & (p.values < 1.0 - PROB_CLAMP)
    n = p.values.size
    loss = -(yv * np.log(pc) + (1.0 - yv) * np.log(1.0 - pc)).mean()

    def backward(g):
        _acc(p, g * inside * (pc - yv) / (pc * (1.0 - pc)) / n)

    return _emit(tape, (p,), np.asarray(loss), backward)


def cross_entropy(tape, logits, targets) -> DTensor:
    """Cross-entropy of logits against integer targets.

    1-D logits take a single index; 2-D logits take one index per row and the
    row losses are averaged.
    """
    logits = _as_dt(logits)
    v = logits.values
    squeeze = v.ndim == 1
    m = v.reshape(1, -1) if squeeze else v
    idx = np.atleast_1d(np.asarray(targets, dtype=np.intp))
    if idx.shape[0] != m.shape[0]:
        raise ValueError("one target index per logit row required")
    shifted = m - m.max(axis=1, keepdims=True)
    logz = np.log(np.exp(shifted).sum(axis=1, keepdims=True))
    logp = shifted - logz
    n = m.shape[0]
    loss = -logp[np.arange(n), idx].mean()
    soft = np.exp(logp)

    def backward(g):
        grad = soft.copy()
        grad[np.arange(n), idx] -= 1.0
        grad *= g / n
        _acc(logits, grad.reshape(v.shape))

    return _emit(tape, (logits,), np.asarray(loss), backward)
