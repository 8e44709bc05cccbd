"""Kernel models ``k(s, q)`` for the weighted autoconvolution.

Two variants are provided: a constant kernel (``k == 1`` is the classical
autoconvolution) and a physical-style kernel with a sinc phase-mismatch
envelope,

    k(s, q) = scale * chi3 * (1 + w*s) * exp(i*theta) * sinc(dk_z * L / 2),
    dk_z    = c2 * (q - s/2)**2,

which is phase matched (sinc = 1) on the symmetric line ``q = s/2``.
"""
from __future__ import annotations

import functools
import json
from dataclasses import dataclass

import numpy as np

from .grid import SampledGrid

PHYSICAL_KEYS = ("magnitude_scale", "chi3_re", "chi3_im", "mismatch_quadratic",
                 "interaction_length", "carrier_weight", "transverse_phase")


def sinc(t):
    """Unnormalized ``sin(t)/t`` with ``sinc(0) = 1``."""
    return np.sinc(np.asarray(t, dtype=float) / np.pi)


@dataclass(frozen=True)
class ConstantKernel:
    c: complex = 1.0

    def eval(self, s, q):
        s, q = np.broadcast_arrays(np.asarray(s, dtype=float), np.asarray(q, dtype=float))
        out = np.full(s.shape, complex(self.c))
        return out[()] if out.ndim == 0 else out

    def scaled(self, factor: complex) -> "ConstantKernel":
        return ConstantKernel(complex(self.c) * factor)

    @property
    def scale(self) -> float:
        return abs(complex(self.c))

    def to_dict(self) -> dict:
        c = complex(self.c)
        return {"variant": "constant", "c_re": c.real, "c_im": c.imag}


@dataclass(frozen=True)
class PhysicalKernelParams:
    magnitude_scale: float = 1e28
    chi3: complex = 1.0
    mismatch_quadratic: float = 40.0
    interaction_length: float = 1.0
    carrier_weight: float = 0.5
    transverse_phase: float = 0.3

    def __post_init__(self):
        if not self.magnitude_scale > 0:
            raise ValueError("magnitude_scale must be positive")
        if not self.interaction_length > 0:
            raise ValueError("interaction_length must be positive")

    @classmethod
    def from_dict(cls, d: dict) -> "PhysicalKernelParams":
        unknown = set(d) - set(PHYSICAL_KEYS) - {"variant"}
        if unknown:
            raise ValueError(f"unknown physical kernel keys: {sorted(unknown)}")
        defaults = cls()
        chi3 = complex(d.get("chi3_re", defaults.chi3.real), d.get("chi3_im", defaults.chi3.imag))
        return cls(
            magnitude_scale=float(d.get("magnitude_scale", defaults.magnitude_scale)),
            chi3=chi3,
            mismatch_quadratic=float(d.get("mismatch_quadratic", defaults.mismatch_quadratic)),
            interaction_length=float(d.get("interaction_length", defaults.interaction_length)),
            carrier_weight=float(d.get("carrier_weight", defaults.carrier_weight)),
            transverse_phase=float(d.get("transverse_phase", defaults.transverse_phase)),
        )

    def to_dict(self) -> dict:
        chi3 = complex(self.chi3)
        return {
            "magnitude_scale": self.magnitude_scale,
            "chi3_re": chi3.real,
            "chi3_im": chi3.imag,
            "mismatch_quadratic": self.mismatch_quadratic,
            "interaction_length": self.interaction_length,
            "carrier_weight": self.carrier_weight,
            "transverse_phase": self.transverse_phase,
        }


@dataclass(frozen=True)
class PhysicalKernel:
    params: PhysicalKernelParams = PhysicalKernelParams()

    def eval(self, s, q):
        p = self.params
        s = np.asarray(s, dtype=float)
        q = np.asarray(q, dtype=float)
        mismatch = p.mismatch_quadratic * (q - s / 2.0) ** 2
        prefactor = p.magnitude_scale * complex(p.chi3) * np.exp(1j * p.transverse_phase)
        out = prefactor * (1.0 + p.carrier_weight * s) * sinc(mismatch * p.interaction_length / 2.0)
        return out[()] if np.ndim(out) == 0 else out

    def scaled(self, factor: float) -> "PhysicalKernel":
        p = self.params
        return PhysicalKernel(PhysicalKernelParams(
            p.magnitude_scale, complex(p.chi3) * factor, p.mismatch_quadratic,
            p.interaction_length, p.carrier_weight, p.transverse_phase))

    @property
    def scale(self) -> float:
        return self.params.magnitude_scale

    def to_dict(self) -> dict:
        return {"variant": "physical", **self.params.to_dict()}


Kernel = ConstantKernel | PhysicalKernel


def eval_kernel(kernel: Kernel, s, q):
    return kernel.eval(s, q)


def kernel_from_dict(d: dict) -> Kernel:
    """Build a kernel from a JSON config block (``variant`` defaults to physical)."""
    variant = d.get("variant", "physical")
    if variant == "constant":
        return ConstantKernel(complex(d.get("c_re", 1.0), d.get("c_im", 0.0)))
    if variant == "physical":
        return PhysicalKernel(PhysicalKernelParams.from_dict(d))
    raise ValueError(f"unknown kernel variant {variant!r}")


def load_kernel(path) -> Kernel:
    with open(path, encoding="utf-8") as fh:
        return kernel_from_dict(json.load(fh))


@functools.lru_cache(maxsize=8)
def _kernel_matrix_cached(kernel: Kernel, grid: SampledGrid) -> np.ndarray:
    s_phys = grid.s + grid.q_cw
    K = np.asarray(kernel.eval(s_phys[:, None], grid.q[None, :]), dtype=complex)
    K = np.broadcast_to(K, (grid.n_out, grid.n_points)).copy()
    K.flags.writeable = False
    return K


def kernel_matrix(kernel: Kernel, grid: SampledGrid) -> np.ndarray:
    """``(2N-1) x N`` matrix with entries ``k(s_m + q_cw, q_n)``.

    The result is cached per (kernel, grid) and read-only.
    """
    return _kernel_matrix_cached(kernel, grid)


def k_max(kernel: Kernel, grid: SampledGrid) -> float:
    """Maximum modulus of the kernel over the grid's (output, input) node pairs."""
    return float(np.max(np.abs(kernel_matrix(kernel, grid))))
