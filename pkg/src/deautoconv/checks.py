"""Self-checks of the numerical core against independent brute-force oracles."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .forward import apply_forward, forward_matrix, frechet_apply
from .grid import SampledGrid, make_grid, to_polar
from .kernel import ConstantKernel, Kernel, PhysicalKernel


@dataclass(frozen=True)
class CheckResult:
    name: str
    value: float
    tolerance: float

    @property
    def passed(self) -> bool:
        return bool(np.isfinite(self.value) and self.value <= self.tolerance)

    def line(self) -> str:
        status = "PASS" if self.passed else "FAIL"
        return f"{status} {self.name}: {self.value:.3e} (tol {self.tolerance:.0e})"


@dataclass(frozen=True)
class CorruptedKernel:
    """Kernel that is wrong at a single (output, input) node pair.

    Used to confirm that the forward oracle actually detects faults.
    """

    base: Kernel
    s_bad: float
    q_bad: float
    offset: complex = 1.0

    def eval(self, s, q):
        out = np.array(self.base.eval(s, q), dtype=complex)
        hit = np.isclose(s, self.s_bad, rtol=0, atol=1e-12) & np.isclose(q, self.q_bad, rtol=0, atol=1e-12)
        out = out + np.where(hit, self.offset * self.base.scale, 0.0)
        return out[()] if out.ndim == 0 else out

    @property
    def scale(self) -> float:
        return self.base.scale


def naive_forward(kernel: Kernel, x, grid: SampledGrid) -> np.ndarray:
    """Double loop over output nodes and input nodes, locating the partner node by position."""
    x = np.asarray(x, dtype=complex)
    n = grid.n_points
    dq = grid.dq
    y = np.zeros(2 * n - 1, dtype=complex)
    for m in range(2 * n - 1):
        s = 2 * grid.q_min - grid.q_cw + m * dq
        acc = 0j
        for j in range(n):
            q = grid.q_min + j * dq
            partner = s + grid.q_cw - q
            i = int(round((partner - grid.q_min) / dq))
            if 0 <= i < n:
                acc += complex(kernel.eval(s + grid.q_cw, q)) * x[j] * x[i]
        y[m] = acc * dq
    return y


def _rel(a, b) -> float:
    scale = np.linalg.norm(b)
    return float(np.linalg.norm(a - b) / scale) if scale > 0 else float(np.linalg.norm(a - b))


def _random_complex(rng, n, scale=1.0):
    return scale * (rng.standard_normal(n) + 1j * rng.standard_normal(n))


def check_forward(kernel: Kernel, n: int, rng, reference: Kernel | None = None,
                  q_cw: float = 0.0) -> list:
    """Library forward map (with ``kernel``) vs the naive loop (with ``reference``)."""
    reference = kernel if reference is None else reference
    grid = make_grid(0.0, 1.0, n, q_cw)
    x = _random_complex(rng, n)
    y_ref = naive_forward(reference, x, grid)
    label = f"{type(reference).__name__}, N={n}"
    return [
        CheckResult(f"forward vs naive loop ({label})", _rel(apply_forward(kernel, x, grid), y_ref), 1e-12),
        CheckResult(f"matrix form vs naive loop ({label})", _rel(forward_matrix(kernel, x, grid) @ x, y_ref), 1e-12),
    ]


def check_quadratic_identity(n: int, rng, eps: float = 0.5) -> CheckResult:
    """``F(x+eps h) - F(x) - eps F'(x)h == eps**2 F(h)`` for the constant kernel.

    The identity is exact for every ``eps``; a moderate ``eps`` avoids
    cancellation in the left-hand side.
    """
    k = ConstantKernel(1.0)
    grid = make_grid(0.0, 1.0, n)
    x, h = _random_complex(rng, n), _random_complex(rng, n)
    lhs = apply_forward(k, x + eps * h, grid) - apply_forward(k, x, grid) - eps * frechet_apply(k, x, h, grid)
    return CheckResult(f"quadratic identity (N={n})", _rel(lhs, eps**2 * apply_forward(k, h, grid)), 1e-11)


def check_frechet_fd(kernel: Kernel, n: int, rng, eps: float = 1e-6) -> CheckResult:
    grid = make_grid(0.0, 1.0, n)
    x, h = _random_complex(rng, n), _random_complex(rng, n)
    fd = (apply_forward(kernel, x + eps * h, grid) - apply_forward(kernel, x, grid)) / eps
    return CheckResult(f"derivative vs finite difference ({type(kernel).__name__}, N={n})",
                       _rel(fd, frechet_apply(kernel, x, h, grid)), 1e-5)


def check_polar_roundtrip(n: int, rng) -> CheckResult:
    x = _random_complex(rng, n)
    x[n // 2] = 0.0
    return CheckResult(f"polar round trip (N={n})", _rel(to_polar(x).recompose(), x), 1e-12)


def check_sign_ambiguity(kernel: Kernel, n: int, rng) -> CheckResult:
    grid = make_grid(0.0, 1.0, n)
    x = _random_complex(rng, n)
    y = apply_forward(kernel, x, grid)
    return CheckResult(f"F(x) == F(-x) ({type(kernel).__name__}, N={n})",
                       _rel(apply_forward(kernel, -x, grid), y), 1e-13)


def run_checks(seed: int = 0, n_derivative: int = 64, corrupt: bool = False) -> list:
    """Run the oracle suite; ``corrupt`` swaps in a kernel with one wrong entry."""
    rng = np.random.Generator(np.random.PCG64(seed))
    results = []
    for kernel in (ConstantKernel(1.0), PhysicalKernel()):
        for n in (2, 17, 64):
            lib = kernel
            if corrupt:
                g = make_grid(0.0, 1.0, n)
                lib = CorruptedKernel(kernel, float(g.s[n - 1]), float(g.q[n // 2]))
            results += check_forward(lib, n, rng, reference=kernel)
    results.append(check_quadratic_identity(n_derivative, rng))
    results.append(check_frechet_fd(PhysicalKernel(), n_derivative, rng))
    results.append(check_polar_roundtrip(n_derivative, rng))
    for kernel in (ConstantKernel(1.0), PhysicalKernel()):
        results.append(check_sign_ambiguity(kernel, n_derivative, rng))
    return results


def check_measurement(ms) -> list:
    """Consistency checks on a loaded measurement set."""
    out = [
        CheckResult("a_hat finite", float(not np.all(np.isfinite(ms.A_hat))), 0.0),
        CheckResult("y_delta finite", float(not np.all(np.isfinite(ms.y_delta.values))), 0.0),
    ]
    if ms.ground_truth is not None:
        x = ms.ground_truth.values
        y = apply_forward(ms.kernel(), x, ms.grid)
        delta = float(ms.meta.get("delta_percent", 0.0))
        # resampling alone leaves a small mismatch; noise adds about delta percent
        tol = 0.05 + 3 * delta / 100.0
        out.append(CheckResult("truth reproduces y_delta (relative)", _rel(ms.y_delta.values, y), tol))
    return out

