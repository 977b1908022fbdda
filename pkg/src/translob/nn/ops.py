"""Differentiable ops with hand-written vector-Jacobian products.

Every op accepts optional leading batch axes. Shapes in the docstrings name
only the trailing axes.
"""

from __future__ import annotations

from typing import Optional, Sequence

import numpy as np

from .tensor import Tensor, record

MASK_VALUE = -1e9


def as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def _unbroadcast(g: np.ndarray, shape: tuple) -> np.ndarray:
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for axis, n in enumerate(shape):
        if n == 1 and g.shape[axis] != 1:
            g = g.sum(axis=axis, keepdims=True)
    return g


def _sum_leading(g: np.ndarray, keep: int) -> np.ndarray:
    return g.reshape(-1, *g.shape[g.ndim - keep :]).sum(axis=0)


def add(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    return record(a.data + b.data, (a, b), lambda g: (_unbroadcast(g, a.shape), _unbroadcast(g, b.shape)))


def scale(x, c: float) -> Tensor:
    x = as_tensor(x)
    return record(x.data * c, (x,), lambda g: (g * c,))


def total(x) -> Tensor:
    """Sum of all elements."""
    x = as_tensor(x)
    return record(np.sum(x.data), (x,), lambda g: (np.broadcast_to(g, x.shape).copy(),))


def sum_squares(x) -> Tensor:
    x = as_tensor(x)
    return record(np.sum(x.data * x.data), (x,), lambda g: (2.0 * g * x.data,))


def reshape(x, shape) -> Tensor:
    x = as_tensor(x)
    return record(x.data.reshape(shape), (x,), lambda g: (g.reshape(x.shape),))


def concat(xs: Sequence, axis: int = -1) -> Tensor:
    xs = [as_tensor(x) for x in xs]
    sizes = [x.shape[axis] for x in xs]
    cuts = np.cumsum(sizes)[:-1]
    return record(np.concatenate([x.data for x in xs], axis=axis), xs, lambda g: np.split(g, cuts, axis=axis))


def matmul(x, w) -> Tensor:
    """``[..., n] @ [n, m] -> [..., m]`` with ``w`` a 2-D matrix."""
    x, w = as_tensor(x), as_tensor(w)
    if w.ndim != 2 or x.shape[-1] != w.shape[0]:
        raise ValueError(f"cannot multiply {x.shape} by {w.shape}")

    def vjp(g):
        gx = g @ w.data.T
        gw = x.data.reshape(-1, x.shape[-1]).T @ g.reshape(-1, w.shape[1])
        return gx, gw

    return record(x.data @ w.data, (x, w), vjp)


def affine(x, w, b=None) -> Tensor:
    """``x @ w + b`` over the last axis; ``b`` is broadcast over rows."""
    y = matmul(x, w)
    if b is None:
        return y
    b = as_tensor(b)
    if b.shape != (w.shape[1],):
        raise ValueError(f"bias shape {b.shape} does not match output width {w.shape[1]}")
    return add(y, b)


def relu(x) -> Tensor:
    x = as_tensor(x)
    mask = x.data > 0  # subgradient 0 at the kink
    return record(np.where(mask, x.data, 0.0), (x,), lambda g: (g * mask,))


def conv1d_causal_dilated(x, w, b, dilation: int = 1) -> Tensor:
    """Causal dilated convolution over time.

    ``x`` is ``[T, Cin]``, ``w`` is ``[k, Cin, Cout]`` and ``b`` is ``[Cout]``.
    Output row ``t`` is ``b + sum_j x[t - j*dilation] @ w[j]`` with rows before
    the start of the sequence read as zeros, so the output keeps length ``T``.
    """
    x, w, b = as_tensor(x), as_tensor(w), as_tensor(b)
    if dilation < 1:
        raise ValueError("dilation must be >= 1")
    k, cin, cout = w.shape
    if x.shape[-1] != cin or b.shape != (cout,):
        raise ValueError(f"conv shapes do not match: x {x.shape}, w {w.shape}, b {b.shape}")
    T = x.shape[-2]
    pad = (k - 1) * dilation
    widths = [(0, 0)] * (x.ndim - 2) + [(pad, 0), (0, 0)]
    xp = np.pad(x.data, widths)
    starts = [pad - j * dilation for j in range(k)]
    y = np.broadcast_to(b.data, x.shape[:-1] + (cout,)).copy()
    for j, s in enumerate(starts):
        y += xp[..., s : s + T, :] @ w.data[j]

    def vjp(g):
        gxp = np.zeros_like(xp)
        gw = np.empty_like(w.data)
        g2 = g.reshape(-1, cout)
        for j, s in enumerate(starts):
            gxp[..., s : s + T, :] += g @ w.data[j].T
            gw[j] = xp[..., s : s + T, :].reshape(-1, cin).T @ g2
        return gxp[..., pad:, :], gw, g2.sum(axis=0)

    return record(y, (x, w, b), vjp)


def layer_norm(x, gain, bias, eps: float = 1e-5) -> Tensor:
    """Normalize each row over the last axis (population variance), then ``* gain + bias``."""
    x, gain, bias = as_tensor(x), as_tensor(gain), as_tensor(bias)
    d = x.shape[-1]
    if gain.shape != (d,) or bias.shape != (d,):
        raise ValueError(f"layer_norm parameters must have shape ({d},)")
    mu = x.data.mean(axis=-1, keepdims=True)
    xc = x.data - mu
    var = (xc * xc).mean(axis=-1, keepdims=True)
    rstd = 1.0 / np.sqrt(var + eps)
    xhat = xc * rstd

    def vjp(g):
        gxhat = g * gain.data
        gx = rstd * (
            gxhat - gxhat.mean(axis=-1, keepdims=True) - xhat * (gxhat * xhat).mean(axis=-1, keepdims=True)
        )
        return gx, _sum_leading(g * xhat, 1), _sum_leading(g, 1)

    return record(xhat * gain.data + bias.data, (x, gain, bias), vjp)


def softmax(x) -> Tensor:
    """Softmax over the last axis, stabilized by subtracting the row maximum."""
    x = as_tensor(x)
    e = np.exp(x.data - x.data.max(axis=-1, keepdims=True))
    y = e / e.sum(axis=-1, keepdims=True)
    return record(y, (x,), lambda g: (y * (g - (g * y).sum(axis=-1, keepdims=True)),))


def causal_mask(n: int) -> np.ndarray:
    """``True`` where key ``j`` is visible from query ``i`` (``j <= i``)."""
    return np.tril(np.ones((n, n), dtype=bool))


def masked_scaled_attention(q, k, v, scale: float):
    """Causal scaled dot-product attention.

    ``q``, ``k``, ``v`` are ``[N, dh]``. Scores above the diagonal are replaced
    by ``MASK_VALUE`` before the row softmax. Returns the attended values and
    the ``[N, N]`` attention matrix as a plain array.
    """
    q, k, v = as_tensor(q), as_tensor(k), as_tensor(v)
    if not (q.shape == k.shape and k.shape[:-1] == v.shape[:-1]):
        raise ValueError(f"attention shapes do not match: {q.shape}, {k.shape}, {v.shape}")
    n = q.shape[-2]
    visible = causal_mask(n)
    s = np.where(visible, (q.data @ np.swapaxes(k.data, -1, -2)) * scale, MASK_VALUE)
    e = np.exp(s - s.max(axis=-1, keepdims=True))
    a = e / e.sum(axis=-1, keepdims=True)

    def vjp(g):
        ga = g @ np.swapaxes(v.data, -1, -2)
        gs = a * (ga - (ga * a).sum(axis=-1, keepdims=True))
        gs = np.where(visible, gs, 0.0) * scale
        gq = gs @ k.data
        gk = np.swapaxes(gs, -1, -2) @ q.data
        gv = np.swapaxes(a, -1, -2) @ g
        return gq, gk, gv

    return record(a @ v.data, (q, k, v), vjp), a


def multi_head_attention(x, wq: Sequence, wk: Sequence, wv: Sequence, wo, scale: Optional[float] = None):
    """Masked multi-head self-attention without projection biases.

    One ``[d, d/C]`` query, key and value matrix per head; head outputs are
    concatenated and mapped through ``wo`` (``[d, d]``). ``scale`` defaults to
    ``1/sqrt(d)``. Returns the output and the list of per-head attention
    matrices.
    """
    x = as_tensor(x)
    d = x.shape[-1]
    heads = len(wq)
    if not heads or d % heads or not (len(wk) == len(wv) == heads):
        raise ValueError(f"{heads} heads do not divide model dimension {d}")
    if scale is None:
        scale = 1.0 / np.sqrt(d)
    outs, maps = [], []
    for a in range(heads):
        out, attn = masked_scaled_attention(matmul(x, wq[a]), matmul(x, wk[a]), matmul(x, wv[a]), scale)
        outs.append(out)
        maps.append(attn)
    return matmul(concat(outs, axis=-1), wo), maps


def dropout(x, rate: float, rng: Optional[np.random.Generator] = None, training: bool = True) -> Tensor:
    """Inverted dropout: survivors are scaled by ``1/(1-rate)``; identity when not training."""
    x = as_tensor(x)
    if not 0 <= rate < 1:
        raise ValueError(f"dropout rate must be in [0, 1), got {rate}")
    if not training or rate == 0:
        return x
    keep = rng.random(x.shape) >= rate
    factor = keep / (1.0 - rate)
    return record(x.data * factor, (x,), lambda g: (g * factor,))


def nll(probs, labels) -> Tensor:
    """Mean negative log-probability of ``labels`` under row-stochastic ``probs`` ``[B, n]``."""
    probs = as_tensor(probs)
    labels = np.asarray(labels, dtype=np.int64).reshape(-1)
    bsz, n = probs.shape
    if len(labels) != bsz:
        raise ValueError(f"{len(labels)} labels for {bsz} rows")
    if len(labels) and (labels.min() < 0 or labels.max() >= n):
        raise ValueError(f"label out of range [0, {n})")
    rows = np.arange(bsz)
    picked = np.maximum(probs.data[rows, labels], np.finfo(np.float64).tiny)

    def vjp(g):
        gp = np.zeros_like(probs.data)
        gp[rows, labels] = -g / (bsz * picked)
        return (gp,)

    return record(-np.mean(np.log(picked)), (probs,), vjp)


def cross_entropy_loss(probs, labels, l2: float = 0.0, l2_params: Sequence = ()) -> Tensor:
    """Categorical cross-entropy on probabilities plus ``l2 * sum ||W||^2`` over ``l2_params``."""
    loss = nll(probs, labels)
    if l2 and l2_params:
        penalty = sum_squares(l2_params[0])
        for p in l2_params[1:]:
            penalty = add(penalty, sum_squares(p))
        loss = add(loss, scale(penalty, l2))
    return loss
