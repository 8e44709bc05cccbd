"""Local ill-posedness probes, the sign ambiguity and reconstruction scores.

``Psi_beta(q) = r * sqrt(1 - 2*beta) * q**(-beta)`` on ``(0, 1]`` has norm
``r`` for every ``0 < beta < 1/2`` while its autoconvolution vanishes as
``beta -> 1/2``.  Adding it to any ``x0`` therefore moves the solution by
``r`` but the data by an arbitrarily small amount.
"""
from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.special import betainc, betaln

from .forward import apply_forward
from .grid import ComplexSignal, SampledGrid, _values, l2_norm
from .kernel import Kernel
from .solver import group_delay


@dataclass(frozen=True)
class PsiBetaSpec:
    r: float
    beta: float

    def __post_init__(self):
        if not self.r > 0:
            raise ValueError(f"r must be positive, got {self.r}")
        if not 0 < self.beta < 0.5:
            raise ValueError(f"beta must lie in (0, 1/2), got {self.beta}")


def _psi(spec: PsiBetaSpec, q):
    return spec.r * math.sqrt(1.0 - 2.0 * spec.beta) * np.asarray(q, dtype=float) ** (-spec.beta)


def psi_beta_samples(spec: PsiBetaSpec, grid: SampledGrid) -> ComplexSignal:
    """Samples of ``Psi_beta`` on a grid over ``[0, 1]``.

    The pole at ``q = 0`` is replaced by the value at ``dq/2``.
    """
    if not (math.isclose(grid.q_min, 0.0, abs_tol=1e-15) and math.isclose(grid.q_max, 1.0)):
        raise ValueError(f"Psi_beta lives on [0, 1], got [{grid.q_min}, {grid.q_max}]")
    q = grid.q.copy()
    q[0] = 0.5 * grid.dq
    return ComplexSignal.on_input(grid, _psi(spec, q))


def psi_beta_autoconv_closed_form(spec: PsiBetaSpec, s):
    """``r**2 (1-2b) s**(1-2b) B(1-b, 1-b)``.

    This is the exact autoconvolution of ``Psi_beta`` for ``s <= 1``; for
    ``1 < s <= 2`` the finite support truncates the integral, see
    :func:`psi_beta_autoconv_exact`.
    """
    s = np.asarray(s, dtype=float)
    if np.any((s < 0) | (s > 2)):
        raise ValueError("s must lie in [0, 2]")
    b = spec.beta
    out = spec.r**2 * (1 - 2 * b) * s ** (1 - 2 * b) * np.exp(betaln(1 - b, 1 - b))
    return out[()] if out.ndim == 0 else out


def psi_beta_autoconv_exact(spec: PsiBetaSpec, s):
    """Autoconvolution of ``Psi_beta`` supported on ``[0, 1]``, valid on all of ``[0, 2]``.

    With ``q = s*t`` the integral over ``max(0, s-1) <= q <= min(1, s)``
    becomes an incomplete Beta integral in ``t``.
    """
    s = np.asarray(s, dtype=float)
    if np.any((s < 0) | (s > 2)):
        raise ValueError("s must lie in [0, 2]")
    b = spec.beta
    a = 1 - b
    with np.errstate(divide="ignore", invalid="ignore"):
        hi = np.where(s > 1, 1.0 / s, 1.0)
        lo = np.where(s > 1, (s - 1.0) / s, 0.0)
        frac = np.where(s > 1, betainc(a, a, np.minimum(hi, 1.0)) - betainc(a, a, lo), 1.0)
    out = spec.r**2 * (1 - 2 * b) * s ** (1 - 2 * b) * np.exp(betaln(a, a)) * frac
    return out[()] if out.ndim == 0 else out


def psi_beta_image_bound(r: float, beta: float) -> float:
    """Upper bound ``sqrt(2) r**2 (1-2b) pi 2**(1-2b)`` for ``||Psi_beta * Psi_beta||``."""
    return math.sqrt(2.0) * r**2 * (1 - 2 * beta) * math.pi * 2 ** (1 - 2 * beta)


@dataclass
class IllposednessTable:
    beta: list
    perturbation_norm: list
    image_diff_norm: list
    bound: list

    COLUMNS = ("beta", "perturbation_norm", "image_diff_norm", "bound")

    def rows(self):
        return list(zip(self.beta, self.perturbation_norm, self.image_diff_norm, self.bound))

    def to_csv(self, path=None) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(self.COLUMNS)
        for row in self.rows():
            w.writerow([repr(float(v)) for v in row])
        text = buf.getvalue()
        if path is not None:
            Path(path).write_text(text, encoding="utf-8", newline="\n")
        return text


def illposedness_demo(x0, r: float, betas, kernel: Kernel, grid: SampledGrid) -> IllposednessTable:
    """Perturb ``x0`` by ``Psi_beta`` for each beta and measure solution and data changes."""
    betas = [float(b) for b in betas]
    if any(b2 <= b1 for b1, b2 in zip(betas, betas[1:])):
        raise ValueError("betas must be strictly increasing")
    x0 = _values(x0)
    y0 = apply_forward(kernel, x0, grid)
    table = IllposednessTable([], [], [], [])
    for b in betas:
        psi = psi_beta_samples(PsiBetaSpec(r, b), grid).values
        diff = apply_forward(kernel, x0 + psi, grid) - y0
        table.beta.append(b)
        table.perturbation_norm.append(l2_norm(psi, grid.dq))
        table.image_diff_norm.append(l2_norm(diff, grid.dq))
        table.bound.append(psi_beta_image_bound(r, b))
    return table


def sign_ambiguity_residual(x, y, kernel: Kernel, grid: SampledGrid):
    """``(||F(x) - y||, ||F(-x) - y||)``; equal for every kernel since F is quadratic."""
    x = _values(x)
    y = _values(y)
    if y.shape != (grid.n_out,):
        raise ValueError(f"y has shape {y.shape}, expected ({grid.n_out},)")
    return (l2_norm(apply_forward(kernel, x, grid) - y, grid.dq),
            l2_norm(apply_forward(kernel, -x, grid) - y, grid.dq))


def central_window(n: int, central_fraction: float = 0.6) -> slice:
    """Index window covering the central ``central_fraction`` of ``n`` nodes."""
    if not 0 < central_fraction <= 1:
        raise ValueError("central_fraction must lie in (0, 1]")
    margin = 0.5 * (1.0 - central_fraction)
    lo = int(round(margin * n))
    hi = max(n - lo, lo + 1)
    return slice(lo, hi)


def reconstruction_error(x_rec: ComplexSignal, x_true: ComplexSignal, central_fraction: float = 0.6):
    """Amplitude and group-delay RMSE over the central window.

    The group delay ignores global sign and constant phase offsets, so no
    alignment of ``x_rec`` to ``x_true`` is needed.
    """
    if len(x_rec) != len(x_true):
        raise ValueError(f"length mismatch: {len(x_rec)} vs {len(x_true)}")
    if not np.allclose(x_rec.nodes, x_true.nodes):
        raise ValueError("x_rec and x_true live on different nodes")
    w = central_window(len(x_true), central_fraction)
    amp = np.abs(x_rec.values) - np.abs(x_true.values)
    gd = group_delay(x_rec) - group_delay(x_true)
    return float(np.sqrt(np.mean(amp[w] ** 2))), float(np.sqrt(np.mean(gd[w] ** 2)))
