"""Independently coded brute-force references for the fast paths.

Everything here is deliberately written from scratch against the definitions
(plain loops, itertools enumeration) rather than calling the production code,
so each suite is a genuine second route.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass

import numpy as np

from .assignment import hungarian_max
from .geometry import Box3, nms


def _oracle_iou(amin, amax, bmin, bmax) -> float:
    inter = 1.0
    va = 1.0
    vb = 1.0
    for k in range(3):
        lo = max(amin[k], bmin[k])
        hi = min(amax[k], bmax[k])
        inter *= max(0.0, hi - lo)
        va *= amax[k] - amin[k]
        vb *= bmax[k] - bmin[k]
    return inter / (va + vb - inter)


def _corners(box):
    c = np.asarray(box.center)
    s = np.asarray(box.size)
    return c - s / 2.0, c + s / 2.0


def nms_oracle(boxes, scores, tau_nms: float) -> list[int]:
    """O(N^2) greedy suppression straight from the definition."""
    n = len(boxes)
    alive = [True] * n
    order = sorted(range(n), key=lambda i: (-scores[i], i))
    kept = []
    for i in order:
        if not alive[i]:
            continue
        kept.append(i)
        ai, aa = _corners(boxes[i])
        for j in order:
            if alive[j] and j != i:
                bi, ba = _corners(boxes[j])
                if _oracle_iou(ai, aa, bi, ba) > tau_nms:
                    alive[j] = False
    return kept


def hungarian_bruteforce(matrix) -> tuple[tuple[tuple[int, int], ...], float]:
    """Best injective assignment by enumerating every candidate mapping."""
    m = np.asarray(matrix, dtype=np.float64)
    n, k = m.shape
    best_obj = -np.inf
    best_pairs: tuple[tuple[int, int], ...] = ()
    if n <= k:
        for cols in itertools.permutations(range(k), n):
            obj = sum(m[i, c] for i, c in enumerate(cols))
            if obj > best_obj:
                best_obj = obj
                best_pairs = tuple((i, c) for i, c in enumerate(cols))
    else:
        for rows in itertools.permutations(range(n), k):
            obj = sum(m[r, j] for j, r in enumerate(rows))
            if obj > best_obj:
                best_obj = obj
                best_pairs = tuple(sorted((r, j) for j, r in enumerate(rows)))
    return best_pairs, float(best_obj)


def sample_f1_bruteforce(pred_boxes, gt_boxes, theta: float) -> float:
    """F1 from an enumeration-based max-total-IoU matcher, zero-target rules included."""
    np_, ng = len(pred_boxes), len(gt_boxes)
    if ng == 0:
        return 1.0 if np_ == 0 else 0.0
    if np_ == 0:
        return 0.0
    iou_mat = np.zeros((np_, ng))
    for i, p in enumerate(pred_boxes):
        pmin, pmax = _corners(p)
        for j, g in enumerate(gt_boxes):
            gmin, gmax = _corners(g)
            iou_mat[i, j] = _oracle_iou(pmin, pmax, gmin, gmax)
    pairs, _ = hungarian_bruteforce(iou_mat)
    tp = sum(1 for i, j in pairs if iou_mat[i, j] >= theta)
    precision = tp / np_
    recall = tp / ng
    if precision + recall == 0.0:
        return 0.0
    return 2.0 * precision * recall / (precision + recall)


def attention_oracle(q, k, v, scale_dim: int) -> np.ndarray:
    """Plain numpy scaled-dot-product attention."""
    logits = q @ k.T / np.sqrt(scale_dim)
    logits = logits - logits.max(axis=1, keepdims=True)
    e = np.exp(logits)
    return (e / e.sum(axis=1, keepdims=True)) @ v


def softmax_matrix_oracle(m, v) -> np.ndarray:
    """softmax(m) @ v with row-wise normalization."""
    shifted = m - m.max(axis=1, keepdims=True)
    e = np.exp(shifted)
    return (e / e.sum(axis=1, keepdims=True)) @ v


@dataclass
class SuiteRow:
    name: str
    cases: int
    failures: int

    @property
    def passed(self) -> bool:
        return self.failures == 0


def _random_boxes(rng, n, span=6.0):
    return [
        Box3(center=rng.uniform(0.5, span, 3), size=rng.uniform(0.2, 1.5, 3))
        for _ in range(n)
    ]


def _suite_nms(rng, corrupt: bool) -> SuiteRow:
    failures = 0
    cases = 200
    for _ in range(cases):
        n = int(rng.integers(1, 65))
        boxes = _random_boxes(rng, n)
        scores = rng.uniform(0.0, 1.0, n)
        tau = float(rng.uniform(0.1, 0.7))
        got = nms(boxes, scores, tau)
        want = nms_oracle(boxes, scores, tau)
        if corrupt and want:
            want = want[:-1]  # deliberate mismatch to prove detection
            corrupt = False
        if got != want:
            failures += 1
    return SuiteRow("nms vs greedy oracle", cases, failures)


def _suite_hungarian(rng, corrupt: bool) -> SuiteRow:
    failures = 0
    cases = 0
    combos = [(n, k) for n in range(1, 8) for k in range(1, 8)]
    reps = [3 if i < 2 else 2 for i in range(len(combos))]  # 100 instances over all 49 shapes
    for (n, k), r in zip(combos, reps):
        for _ in range(r):
            cases += 1
            # 1/64 grid keeps every partial sum exact in binary floating point
            m = rng.integers(0, 65, size=(n, k)).astype(np.float64) / 64.0
            got = hungarian_max(m)
            _, want_obj = hungarian_bruteforce(m)
            if corrupt:
                want_obj += 1.0 / 64.0
                corrupt = False
            if got.objective != want_obj:
                failures += 1
            if len(got.pairs) != min(n, k):
                failures += 1
    return SuiteRow("hungarian vs permutation brute force", cases, failures)


def _suite_sample_f1(rng, corrupt: bool) -> SuiteRow:
    from .metrics import SampleRecord, sample_f1

    failures = 0
    cases = 100
    for _ in range(cases):
        ng = int(rng.integers(0, 5))
        np_ = int(rng.integers(0, 6))
        gt = _random_boxes(rng, ng)
        preds = []
        for _ in range(np_):
            if gt and rng.uniform() < 0.6:
                base = gt[int(rng.integers(0, ng))]
                preds.append(
                    Box3(
                        center=base.center + rng.normal(0.0, 0.08, 3),
                        size=np.maximum(base.size * rng.uniform(0.8, 1.2, 3), 0.05),
                    )
                )
            else:
                preds.extend(_random_boxes(rng, 1))
        rec = SampleRecord(
            predicted=tuple(preds),
            ground_truth=tuple(gt),
            target_class=0,
            scene_classes=(0,) * max(ng, 1),
        )
        got = sample_f1(rec, 0.5)
        want = sample_f1_bruteforce(preds, gt, 0.5)
        if corrupt:
            want += 0.25
            corrupt = False
        if abs(got - want) > 1e-12:
            failures += 1
    return SuiteRow("sample_f1 vs brute-force matcher", cases, failures)


def _suite_attention_reductions(rng, corrupt: bool) -> SuiteRow:
    from .fusion import spatial_attention_values

    failures = 0
    cases = 50
    for _ in range(cases):
        n = int(rng.integers(1, 17))
        d = int(rng.integers(2, 17))
        f = rng.normal(0.0, 1.0, (n, d))
        wq = rng.normal(0.0, 0.5, (d, d))
        wk = rng.normal(0.0, 0.5, (d, d))
        wv = rng.normal(0.0, 0.5, (d, d))
        dmat = 1.0 / np.maximum(rng.uniform(0.1, 4.0, (n, n)), 1e-4)
        out_zero = spatial_attention_values(f, wq, wk, wv, dmat, beta=np.zeros(n))
        want_zero = attention_oracle(f @ wq, f @ wk, f @ wv, d)
        # all-spatial limit must ignore arbitrary query/key perturbations
        wq2 = wq + rng.normal(0.0, 1.0, (d, d))
        wk2 = wk + rng.normal(0.0, 1.0, (d, d))
        out_one = spatial_attention_values(f, wq2, wk2, wv, dmat, beta=np.ones(n))
        want_one = softmax_matrix_oracle(dmat, f @ wv)
        if corrupt:
            want_one = want_one + 1e-6
            corrupt = False
        if np.max(np.abs(out_zero - want_zero)) > 1e-12:
            failures += 1
        if np.max(np.abs(out_one - want_one)) > 1e-12:
            failures += 1
    return SuiteRow("attention reductions (all-visual / all-spatial)", cases, failures)


SUITES = {
    "nms": _suite_nms,
    "hungarian": _suite_hungarian,
    "sample_f1": _suite_sample_f1,
    "attention": _suite_attention_reductions,
}


def run_oracle_suite(seed: int = 0, corrupt: str | None = None) -> list[SuiteRow]:
    """Run every brute-force equivalence suite; ``corrupt`` names one suite to sabotage."""
    if corrupt is not None and corrupt not in SUITES:
        raise ValueError(f"unknown suite {corrupt!r}; choose from {sorted(SUITES)}")
    rows = []
    for i, (name, fn) in enumerate(SUITES.items()):
        rng = np.random.default_rng([seed, i])
        rows.append(fn(rng, corrupt == name))
    return rows
