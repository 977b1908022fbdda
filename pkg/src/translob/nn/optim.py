"""Adam with bias correction."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .tensor import Param


@dataclass
class AdamState:
    lr: float = 1e-4
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    t: int = 0
    m: dict = field(default_factory=dict)
    v: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "lr": self.lr, "beta1": self.beta1, "beta2": self.beta2, "eps": self.eps, "t": self.t,
            "m": {k: {"shape": list(a.shape), "data": a.ravel().tolist()} for k, a in self.m.items()},
            "v": {k: {"shape": list(a.shape), "data": a.ravel().tolist()} for k, a in self.v.items()},
        }

    @classmethod
    def from_dict(cls, d: dict) -> "AdamState":
        def arrays(blob):
            return {k: np.array(e["data"], dtype=np.float64).reshape(e["shape"]) for k, e in blob.items()}

        return cls(d["lr"], d["beta1"], d["beta2"], d["eps"], int(d["t"]), arrays(d["m"]), arrays(d["v"]))


def adam_step(params, state: AdamState) -> None:
    """One in-place Adam update of every param from its ``.grad``."""
    state.t += 1
    bc1 = 1.0 - state.beta1 ** state.t
    bc2 = 1.0 - state.beta2 ** state.t
    for p in params:
        g = p.grad
        m = state.m.get(p.id)
        if m is None:
            m = state.m[p.id] = np.zeros_like(p.data)
            state.v[p.id] = np.zeros_like(p.data)
        v = state.v[p.id]
        m *= state.beta1
        m += (1.0 - state.beta1) * g
        v *= state.beta2
        v += (1.0 - state.beta2) * (g * g)
        p.data -= state.lr * (m / bc1) / (np.sqrt(v / bc2) + state.eps)


def zero_grads(params) -> None:
    for p in params:
        p.zero_grad()
