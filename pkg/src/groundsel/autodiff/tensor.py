"""Double-precision tensors with gradient slots, and the eager tape."""

from __future__ import annotations

import numpy as np


class DTensor:
    """Array with an additively-accumulating gradient slot."""

    __slots__ = ("values", "grad", "requires_grad")

    def __init__(self, values, requires_grad: bool = False):
        self.values = np.asarray(values, dtype=np.float64)
        self.grad: np.ndarray | None = None
        self.requires_grad = requires_grad

    @property
    def shape(self) -> tuple[int, ...]:
        return self.values.shape

    def item(self) -> float:
        return float(self.values)

    def __repr__(self):
        return f"DTensor(shape={self.values.shape}, requires_grad={self.requires_grad})"


class Tape:
    """Ordered record of executed ops; backward replays in exact reverse order.

    A tape and its tensors belong to one thread of execution. One backward
    per forward; call reset() to reuse.
    """

    def __init__(self):
        self._records: list[tuple[tuple[DTensor, ...], DTensor, object]] = []
        self._used = False

    def record(self, inputs: tuple[DTensor, ...], output: DTensor, backward) -> None:
        self._records.append((inputs, output, backward))

    def backward(self, loss: DTensor) -> None:
        """Accumulate d(loss)/d(x) into .grad for every tensor on the tape."""
        if self._used:
            raise RuntimeError("tape already backpropagated; call reset() first")
        if loss.values.shape != ():
            raise ValueError(f"backward needs a scalar loss, got shape {loss.values.shape}")
        for inputs, out, _ in self._records:
            out.grad = None
            for t in inputs:
                t.grad = None
        loss.grad = np.asarray(1.0)
        for inputs, out, fn in reversed(self._records):
            if out.grad is None:
                continue  # branch not connected to the loss
            fn(out.grad)
        self._used = True

    def reset(self) -> None:
        self._records.clear()
        self._used = False

    def __len__(self) -> int:
        return len(self._records)


class ParamStore:
    """Every trainable tensor, keyed by name; order fixed by registration."""

    def __init__(self):
        self._params: dict[str, DTensor] = {}

    def register(self, name: str, values) -> DTensor:
        if name in self._params:
            raise ValueError(f"parameter {name!r} already registered")
        p = DTensor(np.array(values, dtype=np.float64), requires_grad=True)
        self._params[name] = p
        return p

    def __getitem__(self, name: str) -> DTensor:
        return self._params[name]

    def __contains__(self, name: str) -> bool:
        return name in self._params

    def __len__(self) -> int:
        return len(self._params)

    def names(self) -> list[str]:
        return list(self._params)

    def items(self):
        return self._params.items()

    def zero_grad(self) -> None:
        for p in self._params.values():
            p.grad = None

    def n_scalars(self) -> int:
        return sum(p.values.size for p in self._params.values())

    def state(self) -> list[dict]:
        """Flat ordered (name, shape, values) records; the checkpoint payload."""
        return [
            {"name": name, "shape": list(p.values.shape), "values": p.values.ravel().tolist()}
            for name, p in self._params.items()
        ]

    def load_state(self, records: list[dict]) -> None:
        names = self.names()
        if [r["name"] for r in records] != names:
            raise ValueError("checkpoint parameter names/order do not match registration")
        for rec in records:
            p = self._params[rec["name"]]
            vals = np.asarray(rec["values"], dtype=np.float64).reshape(rec["shape"])
            if vals.shape != p.values.shape:
                raise ValueError(f"shape mismatch for {rec['name']!r}")
            p.values = vals
