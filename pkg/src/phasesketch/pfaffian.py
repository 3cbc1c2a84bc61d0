"""Pfaffian of a skew-symmetric matrix by Parlett-Reid elimination."""

from __future__ import annotations

import numpy as np


def pfaffian(a: np.ndarray, *, check: bool = True) -> float | complex:
    """Pfaffian via skew-symmetric Gaussian elimination with partial pivoting.

    Each step pivots the largest entry of the current column into the
    sub-diagonal position, then eliminates two rows and columns at once.
    Cost is O(n^3).
    """
    a = np.array(a, dtype=np.result_type(a, float), copy=True)
    n = a.shape[0]
    if a.shape != (n, n):
        raise ValueError(f"expected a square matrix, got shape {a.shape}")
    if check and not np.allclose(a, -a.T, atol=1e-10 * max(1.0, np.abs(a).max(initial=0.0))):
        raise ValueError("matrix is not skew-symmetric")
    if n == 0:
        return a.dtype.type(1.0)
    if n % 2:
        return a.dtype.type(0.0)

    pf = a.dtype.type(1.0)
    for k in range(0, n - 1, 2):
        piv = k + 1 + int(np.argmax(np.abs(a[k + 1 :, k])))
        if piv != k + 1:
            a[[k + 1, piv], :] = a[[piv, k + 1], :]
            a[:, [k + 1, piv]] = a[:, [piv, k + 1]]
            pf = -pf
        if a[k + 1, k] == 0:
            return a.dtype.type(0.0)
        pf = pf * a[k, k + 1]
        if k + 2 < n:
            tau = a[k, k + 2 :] / a[k, k + 1]
            col = a[k + 2 :, k + 1]
            a[k + 2 :, k + 2 :] += np.outer(tau, col) - np.outer(col, tau)
    return pf
