"""Levenberg-Marquardt iteration with a fixed regularization parameter.

Each step solves the Hermitian positive definite system

    (J^H J + alpha * L^T L) d = J^H (y_delta - F(x)),   J = F'(x),

and moves ``x <- x + gamma * d``.  ``alpha`` stays fixed along the
iteration.  The iteration is stopped at the turning point of the amplitude
deviation ``|| |x_l| - A_hat ||`` and ``alpha`` is chosen from a grid as the
value whose stopped iterate matches ``A_hat`` best.
"""
from __future__ import annotations

import csv
import io
import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
import scipy.linalg

from .forward import forward_matrix, frechet_matrix
from .grid import ComplexSignal, SampledGrid, _values, to_polar
from .kernel import Kernel

log = logging.getLogger(__name__)

_EPS = np.finfo(float).eps


class SolverError(RuntimeError):
    pass


class IllConditionedError(SolverError):
    """The LM normal equations could not be solved reliably (alpha too small)."""


@dataclass(frozen=True)
class SecondDiffOperator:
    """Second-difference matrix ``tridiag(-1, 2, -1) / dq**2`` of size ``n x n``.

    The corners keep the diagonal value 2, which makes the operator
    positive definite.
    """

    n: int
    dq: float

    def __post_init__(self):
        if self.n < 2 or not self.dq > 0:
            raise ValueError("need n >= 2 and dq > 0")

    @cached_property
    def matrix(self) -> np.ndarray:
        L = (2.0 * np.eye(self.n) - np.eye(self.n, k=1) - np.eye(self.n, k=-1)) / self.dq**2
        L.flags.writeable = False
        return L

    @cached_property
    def gram(self) -> np.ndarray:
        """``L^T L``."""
        G = self.matrix.T @ self.matrix
        G.flags.writeable = False
        return G

    def __matmul__(self, x):
        return self.matrix @ x

    @classmethod
    def for_grid(cls, grid: SampledGrid) -> "SecondDiffOperator":
        return cls(grid.n_points, grid.dq)


@dataclass(frozen=True)
class LMConfig:
    """Solver controls.

    ``patience`` is the number of iterations without a new minimum of the
    amplitude deviation after which the turning point is declared.
    """

    alpha_grid: tuple = (1.0,)
    gamma: float = 1.0
    max_iterations: int = 300
    min_iterations: int = 5
    patience: int = 25

    def __post_init__(self):
        grid = tuple(sorted(float(a) for a in np.atleast_1d(self.alpha_grid)))
        object.__setattr__(self, "alpha_grid", grid)
        if not grid:
            raise ValueError("alpha_grid must not be empty")
        if any(not (a > 0 and math.isfinite(a)) for a in grid):
            raise ValueError("alpha_grid entries must be positive and finite")
        if not 0 < self.gamma <= 1:
            raise ValueError(f"gamma must lie in (0, 1], got {self.gamma}")
        if not self.max_iterations >= self.min_iterations >= 1:
            raise ValueError("need max_iterations >= min_iterations >= 1")
        if self.patience < 1:
            raise ValueError("patience must be >= 1")

    @classmethod
    def from_dict(cls, d: dict) -> "LMConfig":
        known = {"alpha_grid", "gamma", "max_iterations", "min_iterations", "patience"}
        unknown = set(d) - known - {"alpha_hat_grid"}
        if unknown:
            raise ValueError(f"unknown solver keys: {sorted(unknown)}")
        kw = {k: d[k] for k in known if k in d}
        if "alpha_grid" in kw:
            kw["alpha_grid"] = tuple(kw["alpha_grid"])
        return cls(**kw)

    def to_dict(self) -> dict:
        return {"alpha_grid": list(self.alpha_grid), "gamma": self.gamma,
                "max_iterations": self.max_iterations, "min_iterations": self.min_iterations,
                "patience": self.patience}


@dataclass
class IterationTrace:
    """Per-iteration residual, smoothness and amplitude deviation."""

    iteration: list = field(default_factory=list)
    residual: list = field(default_factory=list)
    smoothness: list = field(default_factory=list)
    amplitude_deviation: list = field(default_factory=list)

    def append(self, l, residual, smoothness, deviation):
        if self.iteration and l <= self.iteration[-1]:
            raise ValueError("iteration indices must increase")
        self.iteration.append(int(l))
        self.residual.append(float(residual))
        self.smoothness.append(float(smoothness))
        self.amplitude_deviation.append(float(deviation))

    def __len__(self):
        return len(self.iteration)

    def normalized(self) -> "IterationTrace":
        """Copy with every column divided by its maximum."""
        def norm(col):
            top = max(col) if col else 0.0
            return [v / top if top > 0 else v for v in col]
        return IterationTrace(list(self.iteration), norm(self.residual),
                              norm(self.smoothness), norm(self.amplitude_deviation))

    def to_csv(self, path=None) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["iteration", "residual", "smoothness", "amplitude_deviation"])
        for row in zip(self.iteration, self.residual, self.smoothness, self.amplitude_deviation):
            w.writerow([row[0]] + [repr(float(v)) for v in row[1:]])
        text = buf.getvalue()
        if path is not None:
            with open(path, "w", encoding="utf-8", newline="\n") as fh:
                fh.write(text)
        return text

    @classmethod
    def from_csv(cls, path) -> "IterationTrace":
        trace = cls()
        with open(path, newline="", encoding="utf-8") as fh:
            for r in csv.DictReader(fh):
                trace.append(int(r["iteration"]), float(r["residual"]),
                             float(r["smoothness"]), float(r["amplitude_deviation"]))
        return trace


class TurningPointMonitor:
    """Online detection of the turning point of the amplitude deviation.

    The deviation typically rises during a starting phase and then falls to a
    minimum before rising again.  Patience only starts counting once the
    first decrease has been seen; from then on the monitor stops when no new
    minimum (ties count as new, so the latest of equal values wins) occurred
    for ``patience`` iterations.  The reported index is always the argmin of
    all recorded deviations.
    """

    def __init__(self, patience: int = 25, min_iterations: int = 1):
        self.patience = patience
        self.min_iterations = min_iterations
        self.best_index = None
        self.best_value = math.inf
        self.descent_start = None
        self.turning_point = False
        self._last = None

    def update(self, l: int, deviation: float) -> bool:
        """Record iteration ``l``; return True when the iteration should stop."""
        if deviation <= self.best_value:
            self.best_value = deviation
            self.best_index = l
        if self.descent_start is None and self._last is not None and deviation < self._last:
            self.descent_start = l
        self._last = deviation
        if self.descent_start is None or l < self.min_iterations:
            return False
        if l - max(self.best_index, self.descent_start) >= self.patience:
            self.turning_point = True
            return True
        return False


def find_turning_point(iterations, deviations, patience: int = 25, min_iterations: int = 1):
    """Run the stopping logic over a recorded deviation column.

    Returns ``(l_star, turning_point_observed)``.
    """
    mon = TurningPointMonitor(patience, min_iterations)
    for l, d in zip(iterations, deviations):
        if mon.update(int(l), float(d)):
            break
    if mon.best_index is None:
        raise ValueError("empty deviation column")
    return mon.best_index, mon.turning_point


def _solve_hpd(A: np.ndarray, b: np.ndarray) -> np.ndarray:
    try:
        c, lower = scipy.linalg.cho_factor(A, lower=False, check_finite=True)
    except (np.linalg.LinAlgError, ValueError) as exc:
        raise IllConditionedError(f"LM system is not positive definite: {exc}") from exc
    d = np.abs(np.diag(c))
    # (max r_ii / min r_ii)^2 is a lower bound for cond(A)
    if d.min() == 0 or (d.max() / d.min()) ** 2 > 1.0 / _EPS:
        raise IllConditionedError("LM system condition estimate exceeds 1/eps")
    return scipy.linalg.cho_solve((c, lower), b, check_finite=False)


def lm_step(x, y_delta, kernel: Kernel, L: SecondDiffOperator, alpha: float, gamma: float,
            grid: SampledGrid) -> np.ndarray:
    """One regularized Gauss-Newton update of the full complex vector ``x``."""
    if not alpha > 0:
        raise ValueError(f"alpha must be positive, got {alpha}")
    if not gamma > 0:
        raise ValueError(f"gamma must be positive, got {gamma}")
    x = _values(x)
    y_delta = _values(y_delta)
    if y_delta.shape != (grid.n_out,):
        raise ValueError(f"y_delta has shape {y_delta.shape}, expected ({grid.n_out},)")
    r = y_delta - forward_matrix(kernel, x, grid) @ x
    J = frechet_matrix(kernel, x, grid)
    JH = J.conj().T
    d = _solve_hpd(JH @ J + alpha * L.gram, JH @ r)
    return x + gamma * d


@dataclass
class LMRun:
    alpha: float
    x: np.ndarray
    trace: IterationTrace
    l_star: int
    turning_point: bool
    note: str = ""

    @property
    def deviation(self) -> float:
        """Deviation at the stopped iterate, ``sum (|x| - A_hat)^2 dq``."""
        return self.trace.amplitude_deviation[self.trace.iteration.index(self.l_star)] ** 2


def run_lm(alpha: float, y_delta, A_hat, kernel: Kernel, L: SecondDiffOperator,
           config: LMConfig, grid: SampledGrid, x_init=None) -> LMRun:
    """Iterate from ``A_hat * exp(0i)`` and return the turning-point iterate.

    A failing step before ``min_iterations`` iterations are recorded raises
    :class:`SolverError`; a later failure ends the run and keeps the best
    iterate seen so far.
    """
    A_hat = np.asarray(A_hat, dtype=float)
    if A_hat.shape != (grid.n_points,):
        raise ValueError(f"A_hat has shape {A_hat.shape}, expected ({grid.n_points},)")
    if np.any(A_hat < 0):
        raise ValueError("A_hat must be non-negative")
    y_delta = _values(y_delta)
    dq = grid.dq
    x = A_hat.astype(complex) if x_init is None else _values(x_init).copy()

    trace = IterationTrace()
    mon = TurningPointMonitor(config.patience, config.min_iterations)
    best_x = None
    note = ""
    for l in range(1, config.max_iterations + 1):
        try:
            x_new = lm_step(x, y_delta, kernel, L, alpha, config.gamma, grid)
            if not np.all(np.isfinite(x_new)):
                raise SolverError("iterate became non-finite")
        except SolverError as exc:
            if len(trace) < config.min_iterations:
                raise SolverError(
                    f"alpha={alpha:g}: step {l} failed after {len(trace)} recorded "
                    f"iterations (min_iterations={config.min_iterations}): {exc}") from exc
            note = f"stopped at step {l}: {exc}"
            log.warning("alpha=%g %s", alpha, note)
            break
        x = x_new
        Fx = forward_matrix(kernel, x, grid) @ x
        dev = float(np.sqrt(np.sum((np.abs(x) - A_hat) ** 2) * dq))
        trace.append(l,
                     np.sqrt(np.sum(np.abs(Fx - y_delta) ** 2) * dq),
                     np.sqrt(np.sum(np.abs(L @ x) ** 2) * dq),
                     dev)
        stop = mon.update(l, dev)
        if mon.best_index == l:
            best_x = x.copy()
        if stop:
            break
    if not mon.turning_point and not note:
        note = "no turning point observed"
    return LMRun(alpha, best_x, trace, mon.best_index, mon.turning_point, note)


@dataclass
class ReconstructionResult:
    alpha_star: float
    l_star: int
    x_reconstructed: ComplexSignal
    group_delay: np.ndarray
    traces: dict
    deviations_at_stop: dict
    l_stars: dict
    notes: dict
    warnings: list = field(default_factory=list)


def select_alpha(y_delta, A_hat, kernel: Kernel, L: SecondDiffOperator, config: LMConfig,
                 grid: SampledGrid, threads: int = 1) -> ReconstructionResult:
    """Run the LM iteration for every alpha and keep the best amplitude match.

    Ties in the deviation go to the largest alpha.  Alphas whose run fails
    are skipped with a warning; if all fail the last error is raised.
    """
    def one(alpha):
        try:
            return run_lm(alpha, y_delta, A_hat, kernel, L, config, grid)
        except SolverError as exc:
            return exc

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            runs = list(pool.map(one, config.alpha_grid))
    else:
        runs = [one(a) for a in config.alpha_grid]

    ok = {}
    warnings = []
    last_error = None
    for alpha, run in zip(config.alpha_grid, runs):
        if isinstance(run, Exception):
            warnings.append(f"alpha={alpha:g} skipped: {run}")
            last_error = run
        else:
            ok[alpha] = run
    if not ok:
        raise last_error
    deviations = {a: r.deviation for a, r in ok.items()}
    best = min(ok, key=lambda a: (deviations[a], -a))
    run = ok[best]
    x = ComplexSignal.on_input(grid, run.x)
    return ReconstructionResult(
        alpha_star=best,
        l_star=run.l_star,
        x_reconstructed=x,
        group_delay=group_delay(x, grid.dq),
        traces={a: r.trace for a, r in ok.items()},
        deviations_at_stop=deviations,
        l_stars={a: r.l_star for a, r in ok.items()},
        notes={a: r.note for a, r in ok.items()},
        warnings=warnings,
    )


def normalized_alpha(alpha: float, A_hat_max: float, dq: float, kernel_scale: float) -> float:
    """Scale-free regularization parameter ``alpha / (A_max**2 * dq**4 * kernel_scale**2)``.

    The iterates are unchanged when ``A_hat`` is scaled by ``c``, the data by
    ``c**2`` and ``alpha`` by ``c**2``; likewise for the kernel scale.  The
    normalized value is invariant under both scalings.
    """
    for name, v in (("alpha", alpha), ("A_hat_max", A_hat_max), ("dq", dq),
                    ("kernel_scale", kernel_scale)):
        if not v > 0:
            raise ValueError(f"{name} must be positive, got {v}")
    return alpha / A_hat_max**2 / dq**4 / kernel_scale**2


def denormalized_alpha(alpha_hat: float, A_hat_max: float, dq: float, kernel_scale: float) -> float:
    """Inverse of :func:`normalized_alpha`."""
    for name, v in (("alpha_hat", alpha_hat), ("A_hat_max", A_hat_max), ("dq", dq),
                    ("kernel_scale", kernel_scale)):
        if not v > 0:
            raise ValueError(f"{name} must be positive, got {v}")
    return alpha_hat * A_hat_max**2 * dq**4 * kernel_scale**2


def group_delay(x, dq: float | None = None) -> np.ndarray:
    """Derivative of the unwrapped phase; central differences inside, one-sided at the ends."""
    if dq is None:
        if not isinstance(x, ComplexSignal):
            raise TypeError("dq is required for plain arrays")
        dq = x.spacing
    phase = to_polar(x).phase
    return np.gradient(phase, dq)
