"""Discretized kernel autoconvolution and its Frechet derivative.

With ``K[m, j] = k(s_m + q_cw, q_j)`` the rectangular rule gives

    y_m = sum_j K[m, j] * x_j * x_{m-j} * dq

(0-based indices, ``x_i = 0`` outside ``0 <= i < N``).  The argument
``s_m + q_cw - q_j`` of the second factor is always the node ``q_{m-j}``,
so the band is built from integer index arithmetic only.
"""
from __future__ import annotations

import csv
import functools
import io

import numpy as np

from .grid import SampledGrid, _values
from .kernel import Kernel, kernel_matrix


@functools.lru_cache(maxsize=8)
def _band(n: int):
    """Partner indices ``i = m - j`` and the in-support mask for the (2n-1) x n band."""
    m = np.arange(2 * n - 1)[:, None]
    j = np.arange(n)[None, :]
    i = m - j
    mask = (i >= 0) & (i < n)
    idx = np.where(mask, i, 0)
    idx.flags.writeable = False
    mask.flags.writeable = False
    return idx, mask


def _check(x: np.ndarray, grid: SampledGrid, name: str = "x") -> np.ndarray:
    if x.shape != (grid.n_points,):
        raise ValueError(f"{name} has shape {x.shape}, grid expects ({grid.n_points},)")
    return x


def forward_matrix(kernel: Kernel, x, grid: SampledGrid) -> np.ndarray:
    """Matrix ``F(x)`` with ``F(x) @ x == apply_forward(kernel, x, grid)``.

    Entry ``(m, j)`` is ``dq * K[m, j] * x_{m-j}`` inside the band, else 0.
    """
    x = _check(_values(x), grid)
    idx, mask = _band(grid.n_points)
    K = kernel_matrix(kernel, grid)
    return np.where(mask, K * x[idx], 0.0) * grid.dq


def apply_forward(kernel: Kernel, x, grid: SampledGrid) -> np.ndarray:
    """Evaluate the discrete forward map; returns the ``2N-1`` output samples."""
    x = _check(_values(x), grid)
    return forward_matrix(kernel, x, grid) @ x


def frechet_matrix(kernel: Kernel, x0, grid: SampledGrid) -> np.ndarray:
    """Jacobian ``F'(x0)``; entry ``(m, j) = dq * (K[m, j] + K[m, m-j]) * x0_{m-j}``.

    ``F`` is complex-bilinear, so this matrix is complex-linear in ``h`` and
    its adjoint is the conjugate transpose.
    """
    x0 = _check(_values(x0), grid, "x0")
    idx, mask = _band(grid.n_points)
    K = kernel_matrix(kernel, grid)
    swapped = np.take_along_axis(K, idx, axis=1)
    return np.where(mask, (K + swapped) * x0[idx], 0.0) * grid.dq


def frechet_apply(kernel: Kernel, x0, h, grid: SampledGrid) -> np.ndarray:
    """Directional derivative ``F'(x0) h``."""
    h = _check(_values(h), grid, "h")
    return frechet_matrix(kernel, x0, grid) @ h


def matrix_to_csv(M: np.ndarray, path=None) -> str:
    """Row-major CSV dump of a complex matrix with ``re+imi`` cells."""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    for row in np.atleast_2d(M):
        w.writerow([f"{float(z.real)!r}{float(z.imag):+}i" for z in row.astype(complex)])
    text = buf.getvalue()
    if path is not None:
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(text)
    return text
