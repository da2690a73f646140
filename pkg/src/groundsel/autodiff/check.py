"""Central-finite-difference verification of tape gradients."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .tensor import ParamStore, Tape


@dataclass
class FDReport:
    """Per-parameter relative errors from one finite-difference sweep."""

    tol: float
    h: float
    passed: bool
    per_param: dict[str, float] = field(default_factory=dict)
    worst_param: str = ""
    worst_index: int = -1
    worst_rel: float = 0.0

    def summary(self) -> str:
        status = "PASS" if self.passed else "FAIL"
        return (
            f"{status}: max rel err {self.worst_rel:.3e} at {self.worst_param}[{self.worst_index}] "
            f"(tol {self.tol:.1e}, h {self.h:.1e}, {len(self.per_param)} parameters)"
        )


def fd_check(loss_fn, params: ParamStore, h: float = 1e-5, tol: float = 1e-4,
             corrupt_hook=None) -> FDReport:
    """Compare tape gradients of a scalar loss against central differences.

    ``loss_fn(params, tape)`` must build the loss on the given tape; it is
    re-evaluated with ``tape=None`` at perturbed coordinates. Relative error
    per coordinate is |analytic - numeric| / max(1, |analytic|, |numeric|).
    ``corrupt_hook`` (test hook) may mutate the analytic gradients before the
    comparison, to prove the checker catches a broken backward.
    """
    tape = Tape()
    loss = loss_fn(params, tape)
    tape.backward(loss)
    analytic = {
        name: (p.grad.copy() if p.grad is not None else np.zeros_like(p.values))
        for name, p in params.items()
    }
    if corrupt_hook is not None:
        corrupt_hook(analytic)

    report = FDReport(tol=tol, h=h, passed=True)
    for name, p in params.items():
        flat = p.values.ravel()
        a_flat = analytic[name].ravel()
        worst = 0.0
        worst_i = -1
        for i in range(flat.size):
            old = flat[i]
            flat[i] = old + h
            f_plus = float(loss_fn(params, None).values)
            flat[i] = old - h
            f_minus = float(loss_fn(params, None).values)
            flat[i] = old
            numeric = (f_plus - f_minus) / (2.0 * h)
            rel = abs(a_flat[i] - numeric) / max(1.0, abs(a_flat[i]), abs(numeric))
            if rel > worst:
                worst, worst_i = rel, i
        report.per_param[name] = worst
        if worst > report.worst_rel:
            report.worst_rel = worst
            report.worst_param = name
            report.worst_index = worst_i
    report.passed = report.worst_rel < tol
    return report
