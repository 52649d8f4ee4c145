"""Shannon quantities for the binary symmetric sifted-key channel."""
from __future__ import annotations

import numpy as np


def binary_entropy(x):
    """h(x) = -x log2 x - (1 - x) log2 (1 - x), with h(0) = h(1) = 0.

    Accepts scalars or arrays; values outside [0, 1] are rejected.
    """
    arr = np.asarray(x, dtype=float)
    if np.any(~np.isfinite(arr)) or np.any((arr < 0) | (arr > 1)):
        raise ValueError(f"probability out of range: {x!r}")
    with np.errstate(divide="ignore", invalid="ignore"):
        h = -arr * np.log2(arr) - (1 - arr) * np.log2(1 - arr)
    h = np.where((arr == 0) | (arr == 1), 0.0, h)
    return float(h) if h.ndim == 0 else h


def mutual_info_ab(q):
    """Alice-Bob information per sifted bit at QBER ``q`` (0 <= q <= 1/2)."""
    arr = np.asarray(q, dtype=float)
    if np.any(arr < 0) or np.any(arr > 0.5):
        raise ValueError(f"QBER must lie in [0, 1/2], got {q!r}")
    out = 1.0 - np.asarray(binary_entropy(arr))
    return float(out) if out.ndim == 0 else out
