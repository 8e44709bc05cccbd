"""Sampling grids, complex signals and their polar form.

The solution ``x`` lives on ``N`` equidistant input nodes
``q_n = q_min + (n-1)*dq`` and the data ``y`` on ``2N-1`` output nodes
``s_m = 2*q_min - q_cw + (m-1)*dq``.  Norms are discrete L2 norms carrying
the ``sqrt(dq)`` factor so that refinement converges to the continuous norm.
"""
from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np


@dataclass(frozen=True)
class SampledGrid:
    """Equidistant input grid on ``[q_min, q_max]`` plus the derived output grid.

    Parameters
    ----------
    q_min, q_max : float
        Interval of the input (solution) nodes.
    n_points : int
        Number ``N`` of input nodes, at least 2.
    q_cw : float
        Ancilla frequency offset of the output grid (0 in the abstract setting).
    """

    q_min: float
    q_max: float
    n_points: int
    q_cw: float = 0.0

    def __post_init__(self):
        if int(self.n_points) != self.n_points or self.n_points < 2:
            raise ValueError(f"n_points must be an integer >= 2, got {self.n_points}")
        if not self.q_max > self.q_min:
            raise ValueError(f"need q_max > q_min, got [{self.q_min}, {self.q_max}]")
        object.__setattr__(self, "n_points", int(self.n_points))

    @property
    def dq(self) -> float:
        return (self.q_max - self.q_min) / (self.n_points - 1)

    @property
    def n_out(self) -> int:
        return 2 * self.n_points - 1

    @property
    def q(self) -> np.ndarray:
        """Input nodes ``q_1..q_N``."""
        return self.q_min + np.arange(self.n_points) * self.dq

    @property
    def s(self) -> np.ndarray:
        """Output nodes ``s_1..s_{2N-1}``."""
        return 2.0 * self.q_min - self.q_cw + np.arange(self.n_out) * self.dq

    def with_points(self, n_points: int) -> "SampledGrid":
        return SampledGrid(self.q_min, self.q_max, n_points, self.q_cw)

    def to_dict(self) -> dict:
        return {"q_min": self.q_min, "q_max": self.q_max,
                "n_points": self.n_points, "q_cw": self.q_cw}


def make_grid(q_min: float, q_max: float, n_points: int, q_cw: float = 0.0) -> SampledGrid:
    return SampledGrid(float(q_min), float(q_max), n_points, float(q_cw))


@dataclass(frozen=True)
class ComplexSignal:
    """Complex samples on an explicit, equidistant node list."""

    nodes: np.ndarray
    values: np.ndarray
    spacing: float = field(default=0.0)

    def __post_init__(self):
        nodes = np.asarray(self.nodes, dtype=float)
        values = np.asarray(self.values, dtype=complex)
        if nodes.shape != values.shape or nodes.ndim != 1:
            raise ValueError(
                f"nodes and values must be 1-d of equal length, got {nodes.shape} and {values.shape}")
        spacing = self.spacing
        if not spacing:
            if len(nodes) < 2:
                raise ValueError("spacing must be given for a single-node signal")
            spacing = (nodes[-1] - nodes[0]) / (len(nodes) - 1)
        nodes.flags.writeable = False
        values.flags.writeable = False
        object.__setattr__(self, "nodes", nodes)
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "spacing", float(spacing))

    @classmethod
    def on_input(cls, grid: SampledGrid, values) -> "ComplexSignal":
        values = np.asarray(values, dtype=complex)
        if values.shape != (grid.n_points,):
            raise ValueError(f"expected {grid.n_points} input samples, got {values.shape}")
        return cls(grid.q, values, grid.dq)

    @classmethod
    def on_output(cls, grid: SampledGrid, values) -> "ComplexSignal":
        values = np.asarray(values, dtype=complex)
        if values.shape != (grid.n_out,):
            raise ValueError(f"expected {grid.n_out} output samples, got {values.shape}")
        return cls(grid.s, values, grid.dq)

    def __len__(self):
        return len(self.values)

    def __array__(self, dtype=None, copy=None):
        return np.array(self.values, dtype=dtype)


@dataclass(frozen=True)
class PolarSignal:
    """Amplitude/phase decomposition; phase is unwrapped along the nodes."""

    amplitude: np.ndarray
    phase: np.ndarray

    def __post_init__(self):
        amp = np.asarray(self.amplitude, dtype=float)
        ph = np.asarray(self.phase, dtype=float)
        if amp.shape != ph.shape:
            raise ValueError("amplitude and phase must have the same length")
        object.__setattr__(self, "amplitude", amp)
        object.__setattr__(self, "phase", ph)

    def recompose(self) -> np.ndarray:
        return self.amplitude * np.exp(1j * self.phase)


def _values(x) -> np.ndarray:
    if isinstance(x, ComplexSignal):
        return x.values
    return np.asarray(x, dtype=complex)


def unwrap_phase(principal: np.ndarray) -> np.ndarray:
    """Add multiples of 2*pi wherever consecutive samples jump by more than pi."""
    return np.unwrap(principal, period=2 * np.pi)


def to_polar(x) -> PolarSignal:
    """Polar form of ``x``; zero samples get phase 0 before unwrapping."""
    v = _values(x)
    amp = np.abs(v)
    principal = np.where(amp > 0, np.angle(v), 0.0)
    # np.angle returns -pi for (-1, -0j); fold onto (-pi, pi]
    principal = np.where(principal <= -np.pi, np.pi, principal)
    return PolarSignal(amp, unwrap_phase(principal))


def from_polar(p: PolarSignal) -> np.ndarray:
    return p.recompose()


def resample_linear(x: ComplexSignal, target_nodes) -> ComplexSignal:
    """Piecewise-linear interpolation of ``x`` (real and imaginary parts) at ``target_nodes``.

    ``target_nodes`` may be a node array or a :class:`SampledGrid`, in which
    case its input nodes are used.  Requests outside the source node range
    raise ``ValueError``.
    """
    if isinstance(target_nodes, SampledGrid):
        spacing = target_nodes.dq
        target = target_nodes.q
    else:
        target = np.asarray(target_nodes, dtype=float)
        spacing = (target[-1] - target[0]) / (len(target) - 1) if len(target) > 1 else x.spacing
    lo, hi = x.nodes[0], x.nodes[-1]
    tol = 1e-12 * max(1.0, abs(lo), abs(hi))
    if target.min() < lo - tol or target.max() > hi + tol:
        raise ValueError(
            f"target nodes [{target.min()}, {target.max()}] leave source range [{lo}, {hi}]")
    target_c = np.clip(target, lo, hi)
    re = np.interp(target_c, x.nodes, x.values.real)
    im = np.interp(target_c, x.nodes, x.values.imag)
    return ComplexSignal(target, re + 1j * im, spacing)


def resample_real(nodes, values, target) -> np.ndarray:
    """Linear interpolation of a real sequence; same range rules as :func:`resample_linear`."""
    sig = ComplexSignal(nodes, np.asarray(values, dtype=float))
    return resample_linear(sig, target).values.real


def l2_norm(x, dq: float | None = None) -> float:
    """Discrete L2 norm ``(sum |z_n|^2 dq)^(1/2)``.

    For a :class:`ComplexSignal` the spacing of its nodes is used; plain
    arrays need ``dq``.
    """
    if isinstance(x, ComplexSignal):
        dq = x.spacing if dq is None else dq
        v = x.values
    else:
        if dq is None:
            raise TypeError("dq is required for plain arrays")
        v = np.asarray(x)
    return float(np.sqrt(np.sum(np.abs(v) ** 2) * dq))


# -- CSV ------------------------------------------------------------------

SIGNAL_COLUMNS = ("node", "re", "im", "amplitude", "phase")


def signal_to_csv(x: ComplexSignal, path=None, extra: dict | None = None) -> str:
    """Write ``x`` as CSV with columns node, re, im, amplitude, phase (+ ``extra``).

    Returns the CSV text; also writes it to ``path`` when given.
    """
    polar = to_polar(x)
    columns = list(SIGNAL_COLUMNS)
    extra = extra or {}
    columns += list(extra)
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(columns)
    for n in range(len(x)):
        row = [x.nodes[n], x.values[n].real, x.values[n].imag, polar.amplitude[n], polar.phase[n]]
        row += [extra[k][n] for k in extra]
        w.writerow([repr(float(v)) for v in row])
    text = buf.getvalue()
    if path is not None:
        Path(path).write_text(text, encoding="utf-8", newline="\n")
    return text


def signal_from_csv(path) -> ComplexSignal:
    with open(path, newline="", encoding="utf-8") as fh:
        rows = list(csv.DictReader(fh))
    if not rows:
        raise ValueError(f"{path}: no data rows")
    missing = set(SIGNAL_COLUMNS[:3]) - set(rows[0])
    if missing:
        raise ValueError(f"{path}: missing columns {sorted(missing)}")
    nodes = np.array([float(r["node"]) for r in rows])
    values = np.array([complex(float(r["re"]), float(r["im"])) for r in rows])
    return ComplexSignal(nodes, values)
