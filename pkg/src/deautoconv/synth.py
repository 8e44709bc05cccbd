"""Synthetic pulses and simulated noisy measurements.

Data are generated on a fine grid whose node count is not commensurate with
the coarse reconstruction grid, decomposed into amplitude and unwrapped
phase, resampled linearly to the coarse grid and then perturbed by relative
Gaussian noise ``v * (1 + delta/100 * xi)``.
"""
from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field
from fractions import Fraction
from pathlib import Path

import numpy as np

from .forward import apply_forward
from .grid import (ComplexSignal, SampledGrid, resample_real, signal_from_csv, signal_to_csv,
                   to_polar)
from .kernel import Kernel, kernel_from_dict

RNG_ALGORITHM = "numpy.random.PCG64"

SMOOTH_SINGLE_PEAK = "smooth_single_peak"
TWO_PEAK_SINUSOIDAL = "two_peak_sinusoidal"


@dataclass(frozen=True)
class PulseSpec:
    """Shape of a synthetic pulse.

    Positions and widths are given as fractions of ``[q_min, q_max]``.

    ``smooth_single_peak`` uses one Gaussian (``centers[0]``, ``widths[0]``)
    and the odd cubic phase ``pi * ((q - q_mid) / q_half)**3`` clipped to
    ``[-pi, pi]`` (``q_half`` is ``phase_half_width`` times the half interval).
    ``two_peak_sinusoidal`` sums two Gaussians weighted by ``heights`` and
    uses ``a * sin(2*pi*f*t)`` with ``a = phase_amplitude``,
    ``f = phase_frequency`` and ``t`` the relative position.
    """

    shape: str = SMOOTH_SINGLE_PEAK
    amplitude_max: float = 1e-7
    centers: tuple = (0.5,)
    widths: tuple = (0.12,)
    heights: tuple = (1.0,)
    phase_half_width: float = 1.0
    phase_amplitude: float = 0.0
    phase_frequency: float = 1.0

    def __post_init__(self):
        if self.shape not in (SMOOTH_SINGLE_PEAK, TWO_PEAK_SINUSOIDAL):
            raise ValueError(f"unknown pulse shape {self.shape!r}")
        if not self.amplitude_max > 0:
            raise ValueError("amplitude_max must be positive")
        for name in ("centers", "widths", "heights"):
            object.__setattr__(self, name, tuple(float(v) for v in getattr(self, name)))
        need = 1 if self.shape == SMOOTH_SINGLE_PEAK else 2
        if min(len(self.centers), len(self.widths), len(self.heights)) < need:
            raise ValueError(f"{self.shape} needs {need} centers, widths and heights")
        if any(not w > 0 for w in self.widths[:need]):
            raise ValueError("peak widths must be positive")
        if self.shape == SMOOTH_SINGLE_PEAK and not self.phase_half_width > 0:
            raise ValueError("phase_half_width must be positive")

    @classmethod
    def case_one(cls, **kw) -> "PulseSpec":
        """Single smooth peak, phase rising from -pi to pi."""
        return cls(SMOOTH_SINGLE_PEAK, **kw)

    @classmethod
    def case_two(cls, **kw) -> "PulseSpec":
        """Two peaks with a sinusoidal phase."""
        defaults = dict(centers=(0.38, 0.64), widths=(0.11, 0.10), heights=(1.0, 0.75),
                        phase_amplitude=1.0, phase_frequency=1.0)
        defaults.update(kw)
        return cls(TWO_PEAK_SINUSOIDAL, **defaults)

    @classmethod
    def from_dict(cls, d: dict) -> "PulseSpec":
        d = dict(d)
        for key in ("centers", "widths", "heights"):
            if key in d:
                d[key] = tuple(d[key])
        return cls(**d)

    def to_dict(self) -> dict:
        d = asdict(self)
        for key in ("centers", "widths", "heights"):
            d[key] = list(d[key])
        return d


def pulse_profile(spec: PulseSpec, q, q_min: float, q_max: float):
    """Unnormalized amplitude and phase of the pulse at positions ``q``."""
    q = np.asarray(q, dtype=float)
    t = (q - q_min) / (q_max - q_min)
    n_peaks = 1 if spec.shape == SMOOTH_SINGLE_PEAK else 2
    amp = np.zeros_like(t)
    for c, w, h in zip(spec.centers[:n_peaks], spec.widths[:n_peaks], spec.heights[:n_peaks]):
        amp += h * np.exp(-0.5 * ((t - c) / w) ** 2)
    if spec.shape == SMOOTH_SINGLE_PEAK:
        u = (t - 0.5) / (0.5 * spec.phase_half_width)
        phase = np.clip(np.pi * u**3, -np.pi, np.pi)
    else:
        phase = spec.phase_amplitude * np.sin(2 * np.pi * spec.phase_frequency * t)
    return amp, phase


def make_pulse(spec: PulseSpec, grid: SampledGrid, scale_grid: SampledGrid | None = None) -> ComplexSignal:
    """Sample the pulse on ``grid``.

    The amplitude is scaled so that its maximum over the nodes of
    ``scale_grid`` (default: ``grid``) equals ``spec.amplitude_max``.
    """
    ref = grid if scale_grid is None else scale_grid
    ref_amp, _ = pulse_profile(spec, ref.q, grid.q_min, grid.q_max)
    peak = ref_amp.max()
    if not peak > 0:
        raise ValueError("pulse amplitude vanishes on the grid")
    amp, phase = pulse_profile(spec, grid.q, grid.q_min, grid.q_max)
    amp = amp / peak * spec.amplitude_max
    return ComplexSignal.on_input(grid, amp * np.exp(1j * phase))


@dataclass(frozen=True)
class NoiseSpec:
    delta_percent: float = 0.0
    seed: int = 0

    def __post_init__(self):
        if not self.delta_percent >= 0:
            raise ValueError("delta_percent must be non-negative")


def fine_point_count(n_coarse: int, fine_factor=Fraction(7, 3)) -> int:
    """Fine node count ``round(f*(N-1)) + 1``, bumped until the interval counts are coprime.

    Coprime interval counts leave only the two endpoints shared between the
    coarse and fine node sets.  Integer ratios in either direction are
    rejected.
    """
    f = Fraction(fine_factor).limit_denominator(10_000)
    if f <= 0:
        raise ValueError("fine_factor must be positive")
    if f.denominator == 1 or f.numerator == 1:
        raise ValueError(
            f"fine_factor {f} makes one grid a multiple of the other (inverse crime)")
    n_int = n_coarse - 1
    m_int = int(round(f * n_int))
    while m_int < 2 or math.gcd(m_int, n_int) != 1:
        m_int += 1
    return m_int + 1


def shared_nodes(a: SampledGrid, b: SampledGrid, tol: float = 1e-12) -> int:
    """Number of input nodes of ``a`` that coincide with input nodes of ``b``."""
    qa, qb = a.q, b.q
    idx = np.clip(np.searchsorted(qb, qa), 1, len(qb) - 1)
    near = np.minimum(np.abs(qb[idx] - qa), np.abs(qb[idx - 1] - qa))
    return int(np.sum(near <= tol * max(1.0, abs(a.q_max))))


@dataclass
class MeasurementSet:
    A_hat: np.ndarray
    y_delta: ComplexSignal
    grid: SampledGrid
    ground_truth: ComplexSignal | None = None
    meta: dict = field(default_factory=dict)

    def save(self, directory) -> Path:
        """Write a_hat.csv, y_delta.csv, truth.csv (if present) and meta.json."""
        d = Path(directory)
        d.mkdir(parents=True, exist_ok=True)
        signal_to_csv(ComplexSignal.on_input(self.grid, self.A_hat), d / "a_hat.csv")
        signal_to_csv(self.y_delta, d / "y_delta.csv")
        if self.ground_truth is not None:
            signal_to_csv(self.ground_truth, d / "truth.csv")
        meta = dict(self.meta)
        meta["grid"] = self.grid.to_dict()
        (d / "meta.json").write_text(json.dumps(meta, indent=2, sort_keys=True) + "\n",
                                     encoding="utf-8")
        return d

    @classmethod
    def load(cls, directory) -> "MeasurementSet":
        d = Path(directory)
        for name in ("a_hat.csv", "y_delta.csv", "meta.json"):
            if not (d / name).exists():
                raise FileNotFoundError(f"measurement directory {d} lacks {name}")
        meta = json.loads((d / "meta.json").read_text(encoding="utf-8"))
        g = meta["grid"]
        grid = SampledGrid(g["q_min"], g["q_max"], g["n_points"], g.get("q_cw", 0.0))
        a = signal_from_csv(d / "a_hat.csv")
        y = signal_from_csv(d / "y_delta.csv")
        if len(a) != grid.n_points or len(y) != grid.n_out:
            raise ValueError(f"{d}: sample counts do not match the grid in meta.json")
        truth = signal_from_csv(d / "truth.csv") if (d / "truth.csv").exists() else None
        return cls(a.values.real.copy(), ComplexSignal.on_output(grid, y.values), grid,
                   None if truth is None else ComplexSignal.on_input(grid, truth.values), meta)

    def kernel(self) -> Kernel:
        return kernel_from_dict(self.meta["kernel"])


def add_relative_noise(values: np.ndarray, delta_percent: float, rng: np.random.Generator) -> np.ndarray:
    """``v * (1 + delta/100 * xi)`` with standard normal ``xi`` (one draw per sample)."""
    xi = rng.standard_normal(len(values))
    return values * (1.0 + delta_percent / 100.0 * xi)


def simulate_measurement(spec: PulseSpec, kernel: Kernel, coarse_grid: SampledGrid,
                         noise: NoiseSpec = NoiseSpec(), fine_factor=Fraction(7, 3)) -> MeasurementSet:
    """Simulate ``A_hat`` and ``y_delta`` on ``coarse_grid`` from a fine-grid forward run."""
    n_fine = fine_point_count(coarse_grid.n_points, fine_factor)
    fine = coarse_grid.with_points(n_fine)

    x_fine = make_pulse(spec, fine)
    y_fine = ComplexSignal.on_output(fine, apply_forward(kernel, x_fine, fine))
    y_polar = to_polar(y_fine)

    B = resample_real(fine.s, y_polar.amplitude, coarse_grid.s)
    psi = resample_real(fine.s, y_polar.phase, coarse_grid.s)
    A = resample_real(fine.q, np.abs(x_fine.values), coarse_grid.q)
    truth = make_pulse(spec, coarse_grid, scale_grid=fine)

    rng = np.random.Generator(np.random.PCG64(noise.seed))
    A_hat = add_relative_noise(A, noise.delta_percent, rng)
    B_hat = add_relative_noise(B, noise.delta_percent, rng)
    psi_hat = add_relative_noise(psi, noise.delta_percent, rng)
    y_delta = ComplexSignal.on_output(coarse_grid, B_hat * np.exp(1j * psi_hat))

    meta = {
        "delta_percent": noise.delta_percent,
        "seed": noise.seed,
        "generator": RNG_ALGORITHM,
        "fine_grid": fine.to_dict(),
        "fine_factor": str(Fraction(fine_factor).limit_denominator(10_000)),
        "kernel": kernel.to_dict(),
        "pulse": spec.to_dict(),
    }
    return MeasurementSet(A_hat, y_delta, coarse_grid, truth, meta)
