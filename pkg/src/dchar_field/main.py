"""Command-line entry point: one subcommand per verification or simulation workflow."""

from __future__ import annotations

import argparse
import sys
import time
from collections.abc import Sequence
from pathlib import Path
from typing import Any

import pandas as pd
from loguru import logger

from dchar_field import __version__
from dchar_field.config import apply_config_file, settings
from dchar_field.services import commands
from dchar_field.services.noise import GridSpec
from dchar_field.services.solver import IncrementKind
from dchar_field.services.spectral import MeasureKind, SpectralMeasureSpec
from dchar_field.utils.data_helpers import (
    HASH_EXCLUDED,
    config_hash,
    register_run,
    verify_manifest,
    write_manifest,
)
from dchar_field.utils.errors import AcceptanceFailure, DcharFieldError, ValidationError

# settings sections that shape numerical results, snapshotted into every run config
RESULT_SECTIONS = (
    "quadrature",
    "kernel",
    "bessel",
    "fourier",
    "calibration",
    "spectral",
    "noise",
    "solver",
)


def _common_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(add_help=False)
    parser.add_argument(
        "--out",
        type=Path,
        default=None,
        metavar="DIR",
        help="Output root; the command writes into DIR/<command>/ (default: outputs).",
    )
    parser.add_argument("--config", type=Path, default=None, help="TOML overrides file.")
    parser.add_argument("--threads", type=int, default=None, help="Worker threads.")
    parser.add_argument("--tol", type=float, default=None, help="Quadrature tolerance.")
    parser.add_argument("--seed", type=int, default=None, help="Base random seed.")
    parser.add_argument("--log-level", default=None, help="Loguru level (DEBUG, INFO, ...).")
    return parser


def _measure_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(add_help=False)
    parser.add_argument(
        "--measure", choices=[k.value for k in MeasureKind], default=MeasureKind.RIESZ.value
    )
    parser.add_argument("--beta", type=float, default=0.5, help="Riesz exponent in (0, 2).")
    parser.add_argument("--ell", type=float, default=1.0, help="Gaussian length.")
    parser.add_argument(
        "--table", type=Path, default=None, help="CSV with columns radius,density."
    )
    return parser


def _point_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(add_help=False)
    parser.add_argument("--t", type=float, default=1.0)
    parser.add_argument("--x1", type=float, default=0.0)
    parser.add_argument("--x2", type=float, default=0.0)
    return parser


def _sampling_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(add_help=False)
    parser.add_argument("--samples", type=int, default=None, help="Monte Carlo realizations.")
    parser.add_argument("--dt", type=float, default=None)
    parser.add_argument("--t-steps", type=int, default=None)
    parser.add_argument("--x-extent", type=float, default=None)
    parser.add_argument("--n-modes", type=int, default=None)
    parser.add_argument("--refinement", type=int, default=None)
    return parser


def build_parser() -> argparse.ArgumentParser:
    """Parser with every subcommand and its flags."""
    common, measure = _common_parser(), _measure_parser()
    point, sampling = _point_parser(), _sampling_parser()

    parser = argparse.ArgumentParser(
        prog="dchar-field",
        description="Fundamental solution, Fourier bounds and stochastic field of the "
        "degenerate hyperbolic operator ∂t² − 2∂t∂x₁ − x₁²∂x₂².",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument(
        "--verify-manifest",
        type=Path,
        default=None,
        metavar="DIR",
        help="Recompute config hash and file digests of a run directory, then exit.",
    )
    sub = parser.add_subparsers(dest="command")

    gamma = sub.add_parser("gamma", parents=[common, point], help="Sample Γ on a grid.")
    gamma.add_argument("--y1", type=float, default=None)
    gamma.add_argument("--points", type=int, default=None, help="Grid points per axis.")

    sub.add_parser("weak-check", parents=[common], help="Weak fundamental-solution suite.")
    sub.add_parser("fourier-check", parents=[common], help="Representation equivalence sweep.")

    bounds = sub.add_parser("bounds", parents=[common], help="Decay fits and dominance sweep.")
    bounds.add_argument("--calibrate", action="store_true", help="Refit the bound constants.")
    bounds.add_argument("--constants", type=Path, default=None, help="Constants TOML file.")
    bounds.add_argument("--points", type=int, default=200, help="Dominance sweep size.")

    adm = sub.add_parser("admissibility", parents=[common, measure], help="SC and Dalang.")
    adm.add_argument("--method", choices=["closed-form", "quadrature"], default=None)

    sub.add_parser(
        "simulate", parents=[common, measure, point, sampling], help="Sample the field."
    )

    cont = sub.add_parser(
        "continuity", parents=[common, measure, point, sampling], help="L² increments."
    )
    cont.add_argument(
        "--kind", choices=[k.value for k in IncrementKind], action="append", default=None
    )
    cont.add_argument("--delta", type=float, default=0.2, help="Largest increment.")
    cont.add_argument("--halvings", type=int, default=5, help="Number of halvings.")
    cont.add_argument("--mc", action="store_true", help="Bracket with Monte Carlo estimates.")

    sub.add_parser(
        "covariance-check", parents=[common, measure, sampling], help="Noise covariance MC."
    )
    return parser


def _configure_logging(level: str | None) -> None:
    logger.remove()
    logger.add(sys.stderr, level=(level or str(settings.log_level)).upper())


def load_measure(args: argparse.Namespace) -> SpectralMeasureSpec:
    """Measure spec from ``--measure`` and its parameters."""
    kind = MeasureKind(args.measure)
    if kind is MeasureKind.RIESZ:
        return SpectralMeasureSpec.riesz(args.beta)
    if kind is MeasureKind.GAUSSIAN:
        return SpectralMeasureSpec.gaussian(args.ell)
    if kind is MeasureKind.WHITE:
        return SpectralMeasureSpec.white()
    if args.table is None:
        raise ValidationError("--measure table needs --table FILE")
    table = pd.read_csv(args.table)
    if not {"radius", "density"} <= set(table.columns):
        raise ValidationError(f"{args.table} needs columns radius,density")
    return SpectralMeasureSpec.tabulated(
        list(zip(table["radius"].astype(float), table["density"].astype(float), strict=True))
    )


def _grid(args: argparse.Namespace) -> GridSpec:
    return GridSpec.from_settings(
        dt=args.dt,
        t_steps=args.t_steps,
        x_extent=args.x_extent,
        n_modes=args.n_modes,
        refinement=args.refinement,
        seed=args.seed,
    )


def _settings_snapshot() -> dict[str, Any]:
    raw = settings.as_dict()
    return {name: raw.get(name.upper(), {}) for name in RESULT_SECTIONS}


def build_config(args: argparse.Namespace) -> dict[str, Any]:
    """Canonical run config: the parsed flags plus the result-relevant settings.

    Run options listed in ``HASH_EXCLUDED`` are left out.
    """
    flags = {
        k: (str(v) if isinstance(v, Path) else v)
        for k, v in sorted(vars(args).items())
        if k not in HASH_EXCLUDED | {"config", "table"}
    }
    config: dict[str, Any] = {"flags": flags, "settings": _settings_snapshot()}
    if hasattr(args, "measure"):
        config["measure"] = load_measure(args).describe()
    if hasattr(args, "dt"):
        config["grid"] = _grid(args).describe()
    return config


def dispatch(args: argparse.Namespace, ctx: commands.RunContext) -> commands.CommandResult:
    """Runs the workflow behind ``args.command``."""
    name = args.command
    if name == "gamma":
        n = args.points or int(settings.cli.gamma_points)
        return commands.run_gamma(ctx, args.t, args.x1, args.x2, args.y1, n)
    if name == "weak-check":
        return commands.run_weak_check(ctx, args.tol or float(settings.kernel.tol))
    if name == "fourier-check":
        seed = int(settings.noise.seed) if args.seed is None else args.seed
        return commands.run_fourier_check(ctx, seed, args.tol or float(settings.fourier.tol))
    if name == "bounds":
        seed = 0 if args.seed is None else args.seed
        return commands.run_bounds(
            ctx, args.calibrate, args.constants, args.points, seed, args.tol
        )
    mu = load_measure(args)
    if name == "admissibility":
        return commands.run_admissibility(ctx, mu, args.method)
    samples = args.samples or int(settings.solver.samples)
    if name == "simulate":
        point = (args.t, args.x1, args.x2)
        grid = _grid(args)
        return commands.run_simulate(ctx, [point], grid, mu, samples, args.threads, args.tol)
    if name == "continuity":
        kinds = [IncrementKind(k) for k in (args.kind or [k.value for k in IncrementKind])]
        deltas = [args.delta / 2**i for i in range(args.halvings + 1)]
        grid = _grid(args) if args.mc else None
        return commands.run_continuity(
            ctx,
            kinds,
            (args.t, args.x1, args.x2),
            mu,
            deltas,
            args.tol,
            grid,
            samples,
            args.threads,
        )
    if name == "covariance-check":
        return commands.run_covariance_check(ctx, _grid(args), mu, samples, args.tol)
    raise ValidationError(f"unknown command {name!r}")


def _verify(out_dir: Path) -> int:
    problems = verify_manifest(out_dir)
    for problem in problems:
        logger.error(f"❌ {problem}")
    if problems:
        return 1
    logger.success(f"✅ {out_dir} matches its manifest")
    return 0


def run(argv: Sequence[str] | None = None) -> int:
    """Parses ``argv``, runs one command and returns the process exit code.

    Exit codes: 0 success, 1 invalid input, 2 quadrature did not converge,
    3 a check command missed its acceptance threshold.
    """
    parser = build_parser()
    args = parser.parse_args(argv)
    _configure_logging(getattr(args, "log_level", None))

    if args.verify_manifest is not None:
        return _verify(args.verify_manifest)
    if args.command is None:
        parser.print_help()
        return 1

    start_time = time.time()
    logger.info(f"🚀 dchar-field {args.command} in environment: {settings.current_env}")
    try:
        if args.config is not None:
            apply_config_file(args.config)
            _configure_logging(args.log_level)
        config = build_config(args)
        out_dir = Path(args.out or settings.cli.out) / args.command
        ctx = commands.RunContext(args.command, out_dir, config)
        result = dispatch(args, ctx)
        write_manifest(out_dir, args.command, config, result.files)
        n_runs = register_run(out_dir, args.command, config_hash(config), len(result.files))
        logger.info(f"📊 {n_runs} distinct run(s) registered in {out_dir}")
        if not result.accepted:
            raise AcceptanceFailure(f"{args.command}: {result.detail}")
    except DcharFieldError as e:
        logger.error(f"❌ {args.command} failed: {e}")
        return e.exit_code
    except ValueError as e:
        logger.error(f"❌ {args.command} failed on invalid input: {e}")
        return 1
    except ArithmeticError as e:
        logger.error(f"❌ {args.command} failed numerically: {e}")
        return 2

    logger.success(f"🏁 {args.command} finished in {time.time() - start_time:.2f}s.")
    return 0


def main() -> None:
    """Console-script entry point."""
    sys.exit(run())


if __name__ == "__main__":
    main()
