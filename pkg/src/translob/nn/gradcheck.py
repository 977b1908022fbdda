"""Central finite differences for checking analytic gradients."""

from __future__ import annotations

import numpy as np


def numerical_grad(f, arr: np.ndarray, h: float = 1e-5) -> np.ndarray:
    """Central-difference gradient of scalar ``f()`` with respect to ``arr`` (perturbed in place)."""
    grad = np.zeros_like(arr)
    flat = arr.reshape(-1)
    gflat = grad.reshape(-1)
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + h
        fp = f()
        flat[i] = orig - h
        fm = f()
        flat[i] = orig
        gflat[i] = (fp - fm) / (2.0 * h)
    return grad


def max_relative_error(analytic, numeric, abs_floor: float = 1e-7) -> float:
    """Largest ``|a - n| / max(|a|, |n|)`` over entries whose difference exceeds ``abs_floor``."""
    a = np.asarray(analytic, dtype=np.float64)
    n = np.asarray(numeric, dtype=np.float64)
    diff = np.abs(a - n)
    denom = np.maximum(np.abs(a), np.abs(n))
    rel = np.where(diff <= abs_floor, 0.0, diff / np.where(denom > 0, denom, 1.0))
    return float(rel.max()) if rel.size else 0.0
