"""Tensors, parameters and the gradient tape.

Ops in :mod:`translob.nn.ops` compute their forward value eagerly with
numpy. While a :class:`GradTape` is active, each op whose inputs need
gradients appends a node holding its output, its inputs and a
vector-Jacobian closure. :func:`backward` walks the node list in reverse,
which is a valid reverse topological order because nodes are recorded in
execution order.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional, Sequence

import numpy as np


class Tensor:
    __slots__ = ("data", "requires_grad", "grad")

    def __init__(self, data, requires_grad: bool = False):
        self.data = np.asarray(data, dtype=np.float64)
        self.requires_grad = requires_grad
        self.grad: Optional[np.ndarray] = None

    @property
    def shape(self) -> tuple:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def size(self) -> int:
        return self.data.size

    def numpy(self) -> np.ndarray:
        return self.data

    def item(self) -> float:
        return float(self.data.reshape(()))

    def __repr__(self) -> str:
        return f"Tensor(shape={self.shape}, requires_grad={self.requires_grad})"


class Param(Tensor):
    """A learnable tensor with a stable ``id`` and a gradient buffer of the same shape."""

    __slots__ = ("id",)

    def __init__(self, value, id: str):
        super().__init__(value, requires_grad=True)
        self.id = id
        self.grad = np.zeros_like(self.data)

    def zero_grad(self) -> None:
        self.grad = np.zeros_like(self.data)

    def __repr__(self) -> str:
        return f"Param({self.id!r}, shape={self.shape})"


VJP = Callable[[np.ndarray], Sequence[Optional[np.ndarray]]]


@dataclass
class Node:
    out: Tensor
    inputs: tuple
    vjp: VJP


class GradTape:
    """Ordered record of differentiable ops executed inside ``with tape:``."""

    _stack: list["GradTape"] = []

    def __init__(self) -> None:
        self.nodes: list[Node] = []

    def __enter__(self) -> "GradTape":
        GradTape._stack.append(self)
        return self

    def __exit__(self, *exc) -> None:
        GradTape._stack.remove(self)

    def __len__(self) -> int:
        return len(self.nodes)

    @classmethod
    def active(cls) -> Optional["GradTape"]:
        return cls._stack[-1] if cls._stack else None


_checked = False


class checked:
    """Context manager rejecting non-finite op outputs with ``FloatingPointError``."""

    def __enter__(self) -> None:
        global _checked
        self._prev, _checked = _checked, True

    def __exit__(self, *exc) -> None:
        global _checked
        _checked = self._prev


def record(out_data: np.ndarray, inputs: Sequence[Tensor], vjp: VJP) -> Tensor:
    """Wrap ``out_data`` and register its node on the active tape when needed."""
    if _checked and not np.isfinite(out_data).all():
        raise FloatingPointError("non-finite value produced by op")
    tape = GradTape.active()
    needs = tape is not None and any(t.requires_grad for t in inputs)
    out = Tensor(out_data, requires_grad=needs)
    if needs:
        tape.nodes.append(Node(out, tuple(inputs), vjp))
    return out


def backward(tape: GradTape, loss: Tensor) -> None:
    """Reverse accumulation from scalar ``loss``.

    Gradients are added into ``Param.grad`` (callers zero them between steps);
    every other tensor that requires grad gets a fresh ``.grad``.
    """
    if loss.size != 1:
        raise ValueError(f"backward needs a scalar root, got shape {loss.shape}")
    if not loss.requires_grad:
        return
    grads: dict[int, np.ndarray] = {id(loss): np.ones_like(loss.data)}
    leaves: dict[int, Tensor] = {}
    for node in reversed(tape.nodes):
        g = grads.pop(id(node.out), None)
        if g is None:
            continue
        node.out.grad = g
        for inp, gi in zip(node.inputs, node.vjp(g)):
            if gi is None or not inp.requires_grad:
                continue
            key = id(inp)
            if key in grads:
                grads[key] = grads[key] + gi
            else:
                grads[key] = gi
                leaves[key] = inp
    for key, g in grads.items():
        leaf = leaves.get(key)
        if leaf is None:
            continue
        if isinstance(leaf, Param):
            leaf.grad = leaf.grad + g
        else:
            leaf.grad = g
