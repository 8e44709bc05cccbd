"""Command-line interface: synth, reconstruct, demo-illposed, check.

Configs are JSON files with optional blocks ``grid``, ``kernel``, ``pulse``,
``noise``, ``solver``, ``illposed`` and ``output``.  Numeric outputs are
CSV, summaries JSON.

Exit status: 0 on success, 1 when a check fails, 2 for usage or config
errors and 3 for runtime failures.
"""
from __future__ import annotations

import argparse
import json
import logging
import sys
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import checks
from .grid import ComplexSignal, SampledGrid, signal_to_csv
from .illposed import illposedness_demo, reconstruction_error, sign_ambiguity_residual
from .kernel import Kernel, PhysicalKernel, kernel_from_dict
from .solver import (IterationTrace, LMConfig, SecondDiffOperator, SolverError, denormalized_alpha,
                     find_turning_point, group_delay, normalized_alpha, select_alpha)
from .synth import (MeasurementSet, NoiseSpec, PulseSpec, make_pulse,
                    simulate_measurement)

log = logging.getLogger("deautoconv")

DEFAULT_ALPHA_HAT_GRID = tuple(float(a) for a in np.logspace(-2, 4, 10))
DEFAULT_BETAS = (0.3, 0.4, 0.45, 0.49)

EXIT_OK, EXIT_CHECK_FAILED, EXIT_CONFIG, EXIT_RUNTIME = 0, 1, 2, 3


class ConfigError(ValueError):
    pass


@dataclass
class IllposedConfig:
    r: float = 1.0
    betas: tuple = DEFAULT_BETAS
    n_points: int = 2001
    x0: str = "zero"  # "zero" or "pulse"

    def to_dict(self) -> dict:
        return {"r": self.r, "betas": list(self.betas), "n_points": self.n_points, "x0": self.x0}


@dataclass
class RunConfig:
    grid: SampledGrid = field(default_factory=lambda: SampledGrid(0.0, 1.0, 128))
    kernel: Kernel = field(default_factory=PhysicalKernel)
    pulse: PulseSpec = field(default_factory=PulseSpec.case_one)
    noise: NoiseSpec = field(default_factory=NoiseSpec)
    solver: LMConfig = field(default_factory=LMConfig)
    alpha_hat_grid: tuple | None = DEFAULT_ALPHA_HAT_GRID
    illposed: IllposedConfig = field(default_factory=IllposedConfig)
    output: str | None = None

    def to_dict(self) -> dict:
        solver = self.solver.to_dict()
        if self.alpha_hat_grid is not None:
            del solver["alpha_grid"]
            solver["alpha_hat_grid"] = list(self.alpha_hat_grid)
        return {
            "grid": self.grid.to_dict(),
            "kernel": self.kernel.to_dict(),
            "pulse": self.pulse.to_dict(),
            "noise": {"delta_percent": self.noise.delta_percent, "seed": self.noise.seed},
            "solver": solver,
            "illposed": self.illposed.to_dict(),
            "output": self.output,
        }


def _block(name, fn, d):
    try:
        return fn(d)
    except (TypeError, ValueError, KeyError) as exc:
        raise ConfigError(f"config block '{name}': {exc}") from exc


def _grid(d):
    unknown = set(d) - {"q_min", "q_max", "n_points", "N", "q_cw"}
    if unknown:
        raise ValueError(f"unknown keys {sorted(unknown)}")
    n = d.get("n_points", d.get("N", 128))
    return SampledGrid(float(d.get("q_min", 0.0)), float(d.get("q_max", 1.0)), n,
                       float(d.get("q_cw", 0.0)))


def _pulse(d):
    d = dict(d)
    shape = d.pop("shape", "smooth_single_peak")
    if shape in ("two_peak_sinusoidal", "case_two"):
        return PulseSpec.case_two(**{k: tuple(v) if isinstance(v, list) else v for k, v in d.items()})
    if shape in ("smooth_single_peak", "case_one"):
        return PulseSpec.from_dict({"shape": "smooth_single_peak", **d})
    raise ValueError(f"unknown pulse shape {shape!r}")


def _noise(d):
    unknown = set(d) - {"delta_percent", "seed"}
    if unknown:
        raise ValueError(f"unknown keys {sorted(unknown)}")
    return NoiseSpec(float(d.get("delta_percent", 0.0)), int(d.get("seed", 0)))


def _illposed(d):
    unknown = set(d) - {"r", "betas", "n_points", "x0"}
    if unknown:
        raise ValueError(f"unknown keys {sorted(unknown)}")
    cfg = IllposedConfig(float(d.get("r", 1.0)), tuple(float(b) for b in d.get("betas", DEFAULT_BETAS)),
                         int(d.get("n_points", 2001)), d.get("x0", "zero"))
    if cfg.x0 not in ("zero", "pulse"):
        raise ValueError(f"x0 must be 'zero' or 'pulse', got {cfg.x0!r}")
    return cfg


def config_from_dict(d: dict) -> RunConfig:
    unknown = set(d) - {"grid", "kernel", "pulse", "noise", "solver", "illposed", "output"}
    if unknown:
        raise ConfigError(f"unknown config blocks {sorted(unknown)}")
    cfg = RunConfig()
    if "grid" in d:
        cfg.grid = _block("grid", _grid, d["grid"])
    if "kernel" in d:
        cfg.kernel = _block("kernel", kernel_from_dict, d["kernel"])
    if "pulse" in d:
        cfg.pulse = _block("pulse", _pulse, d["pulse"])
    if "noise" in d:
        cfg.noise = _block("noise", _noise, d["noise"])
    if "solver" in d:
        s = d["solver"]
        cfg.solver = _block("solver", LMConfig.from_dict, s)
        if "alpha_grid" in s and "alpha_hat_grid" in s:
            raise ConfigError("config block 'solver': give alpha_grid or alpha_hat_grid, not both")
        if "alpha_grid" in s:
            cfg.alpha_hat_grid = None
        elif "alpha_hat_grid" in s:
            grid = s["alpha_hat_grid"]
            if not grid or any(not float(a) > 0 for a in grid):
                raise ConfigError("config block 'solver': alpha_hat_grid must be non-empty and positive")
            cfg.alpha_hat_grid = tuple(sorted(float(a) for a in grid))
    if "illposed" in d:
        cfg.illposed = _block("illposed", _illposed, d["illposed"])
    cfg.output = d.get("output")
    return cfg


def load_config(path) -> RunConfig:
    if path is None:
        return RunConfig()
    p = Path(path)
    try:
        text = p.read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read config {p}: {exc}") from exc
    try:
        d = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{p}:{exc.lineno}:{exc.colno}: {exc.msg}") from exc
    if not isinstance(d, dict):
        raise ConfigError(f"{p}: top level must be a JSON object")
    return config_from_dict(d)


def _out_dir(args, cfg: RunConfig, default: str) -> Path:
    out = Path(args.out or cfg.output or default)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _write_json(path: Path, obj) -> None:
    path.write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n", encoding="utf-8", newline="\n")


def _alpha_tag(alpha: float) -> str:
    return f"{alpha:.6e}"


# -- commands ---------------------------------------------------------------

def cmd_synth(args) -> int:
    cfg = load_config(args.config)
    if args.seed is not None:
        cfg.noise = NoiseSpec(cfg.noise.delta_percent, args.seed)
    out = _out_dir(args, cfg, "measurement")
    ms = simulate_measurement(cfg.pulse, cfg.kernel, cfg.grid, cfg.noise)
    ms.save(out)
    print(f"wrote measurement to {out}")
    return EXIT_OK


def _plot_rows(grid, x_rec, truth, result, alpha_hats):
    rows = []
    polar_series = [("reconstruction", x_rec)]
    if truth is not None:
        polar_series.append(("truth", truth))
    for name, sig in polar_series:
        amp = np.abs(sig.values)
        gd = group_delay(sig)
        rows += [(f"{name}_amplitude", q, a) for q, a in zip(grid.q, amp)]
        rows += [(f"{name}_group_delay", q, g) for q, g in zip(grid.q, gd)]
    for alpha, tr in result.traces.items():
        tag = _alpha_tag(alpha_hats[alpha])
        rows += [(f"deviation_ahat_{tag}", l, d) for l, d in zip(tr.iteration, tr.amplitude_deviation)]
    rows += [("selection_deviation", alpha_hats[a], d) for a, d in sorted(result.deviations_at_stop.items())]
    return rows


def _write_plot_csv(path: Path, rows) -> None:
    lines = ["series,x,y"] + [f"{s},{float(x)!r},{float(y)!r}" for s, x, y in rows]
    path.write_text("\n".join(lines) + "\n", encoding="utf-8", newline="\n")


def _replay(args, cfg: RunConfig) -> int:
    trace = IterationTrace.from_csv(args.replay)
    l_star, turning = find_turning_point(trace.iteration, trace.amplitude_deviation,
                                         cfg.solver.patience, 1)
    out = _out_dir(args, cfg, "replay")
    summary = {"replayed_trace": str(args.replay), "l_star": l_star, "turning_point": turning,
               "patience": cfg.solver.patience}
    _write_json(out / "summary.json", summary)
    print(f"l_star = {l_star}")
    return EXIT_OK


def cmd_reconstruct(args) -> int:
    cfg = load_config(args.config)
    if args.replay:
        return _replay(args, cfg)
    if args.measurement is None:
        raise ConfigError("reconstruct needs a measurement directory (or --replay)")
    ms = MeasurementSet.load(args.measurement)
    kernel = ms.kernel()
    grid = ms.grid
    A_max = float(np.max(ms.A_hat))
    if not A_max > 0:
        raise SolverError("A_hat has no positive entries")

    solver = cfg.solver
    if cfg.alpha_hat_grid is not None:
        alphas = [denormalized_alpha(a, A_max, grid.dq, kernel.scale) for a in cfg.alpha_hat_grid]
        solver = LMConfig(tuple(alphas), solver.gamma, solver.max_iterations,
                          solver.min_iterations, solver.patience)
    L = SecondDiffOperator.for_grid(grid)
    result = select_alpha(ms.y_delta, ms.A_hat, kernel, L, solver, grid, threads=args.threads)
    alpha_hats = {a: normalized_alpha(a, A_max, grid.dq, kernel.scale) for a in solver.alpha_grid}

    out = _out_dir(args, cfg, "reconstruction")
    x = result.x_reconstructed
    signal_to_csv(x, out / "reconstruction.csv", extra={"group_delay": result.group_delay})
    for alpha, tr in result.traces.items():
        tr.to_csv(out / f"trace_{_alpha_tag(alpha)}.csv")

    runs = []
    for alpha in solver.alpha_grid:
        entry = {"alpha": alpha, "alpha_hat": alpha_hats[alpha]}
        if alpha in result.traces:
            entry.update(l_star=result.l_stars[alpha], deviation=result.deviations_at_stop[alpha],
                         iterations=len(result.traces[alpha]), note=result.notes[alpha])
        else:
            entry["failed"] = True
        runs.append(entry)
    summary = {
        "alpha_star": result.alpha_star,
        "alpha_hat_star": alpha_hats[result.alpha_star],
        "l_star": result.l_star,
        "runs": runs,
        "warnings": result.warnings,
        "measurement": str(args.measurement),
        "measurement_meta": ms.meta,
        "config": {**cfg.to_dict(), "solver_effective": solver.to_dict()},
    }
    if ms.ground_truth is not None:
        amp, gd = reconstruction_error(x, ms.ground_truth)
        x0 = ComplexSignal.on_input(grid, ms.A_hat)
        amp0, gd0 = reconstruction_error(x0, ms.ground_truth)
        summary["scores"] = {"central_fraction": 0.6, "amp_rmse": amp, "gd_rmse": gd,
                             "initial_amp_rmse": amp0, "initial_gd_rmse": gd0}
    _write_json(out / "summary.json", summary)
    if args.plot:
        _write_plot_csv(out / "plot.csv", _plot_rows(grid, x, ms.ground_truth, result, alpha_hats))
    print(f"alpha_hat* = {alpha_hats[result.alpha_star]:.6g}, l* = {result.l_star}; wrote {out}")
    for w in result.warnings:
        print(f"warning: {w}", file=sys.stderr)
    return EXIT_OK


def cmd_demo_illposed(args) -> int:
    cfg = load_config(args.config)
    ic = cfg.illposed
    if not ic.r > 0:
        raise ConfigError(f"config block 'illposed': r must be positive, got {ic.r}")
    grid = SampledGrid(0.0, 1.0, ic.n_points)
    if ic.x0 == "pulse":
        x0 = make_pulse(cfg.pulse, grid).values
    else:
        x0 = np.zeros(grid.n_points, dtype=complex)
    table = illposedness_demo(x0, ic.r, ic.betas, cfg.kernel, grid)
    out = _out_dir(args, cfg, "illposed")
    text = table.to_csv(out / "illposed.csv")
    rng = np.random.Generator(np.random.PCG64(cfg.noise.seed if args.seed is None else args.seed))
    xs = rng.standard_normal(grid.n_points) + 1j * rng.standard_normal(grid.n_points)
    ys = rng.standard_normal(grid.n_out) + 1j * rng.standard_normal(grid.n_out)
    r_plus, r_minus = sign_ambiguity_residual(xs, ys, cfg.kernel, grid)
    _write_json(out / "summary.json", {"sign_ambiguity": {"residual_x": r_plus, "residual_minus_x": r_minus},
                                       "config": cfg.to_dict()})
    sys.stdout.write(text)
    return EXIT_OK


def cmd_check(args) -> int:
    results = checks.run_checks(seed=0 if args.seed is None else args.seed, corrupt=args.corrupt_kernel)
    if args.measurement is not None:
        results += checks.check_measurement(MeasurementSet.load(args.measurement))
    for r in results:
        print(r.line())
    failed = sum(not r.passed for r in results)
    print(f"{len(results) - failed}/{len(results)} checks passed")
    return EXIT_OK if failed == 0 else EXIT_CHECK_FAILED


# -- entry point --------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON run configuration")
    common.add_argument("--out", help="output directory")
    common.add_argument("--seed", type=int, help="noise / random seed, overrides the config")
    common.add_argument("--threads", type=int, default=1, help="parallel alpha runs")
    common.add_argument("-v", "--verbose", action="store_true")

    p = argparse.ArgumentParser(prog="deautoconv", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("synth", parents=[common], help="simulate a noisy measurement")
    s.set_defaults(func=cmd_synth)

    r = sub.add_parser("reconstruct", parents=[common], help="regularized reconstruction")
    r.add_argument("measurement", nargs="?", help="measurement directory written by synth")
    r.add_argument("--plot", action="store_true", help="also write plot.csv (series, x, y)")
    r.add_argument("--replay", metavar="TRACE_CSV",
                   help="apply the stopping rule to a recorded trace instead of solving")
    r.set_defaults(func=cmd_reconstruct)

    d = sub.add_parser("demo-illposed", parents=[common], help="Psi_beta perturbation table")
    d.set_defaults(func=cmd_demo_illposed)

    c = sub.add_parser("check", parents=[common], help="run the oracle self-checks")
    c.add_argument("measurement", nargs="?", help="optional measurement directory to check")
    c.add_argument("--corrupt-kernel", action="store_true", help=argparse.SUPPRESS)
    c.set_defaults(func=cmd_check)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    if args.threads < 1:
        print("error: --threads must be >= 1", file=sys.stderr)
        return EXIT_CONFIG
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (SolverError, OSError, ValueError, KeyError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
