"""Command-line interface.

Subcommands:
    simulate   run one scenario config and write its artifacts
    sweep      run a sweep config and write per-point artifacts + aggregate
    fit-rabi   fit splitting-vs-amplitude points from a CSV
    infer-bm   convert a measured Rabi splitting back to a drive amplitude
    validate   parse and validate a config without running it

Exit codes: 0 success, 2 config error, 3 numerical-invariant violation,
4 classification ambiguity (the spectrum fits no known multiplet), 1 other
pipeline failure.  Sweep parallelism comes from MOLLOWSIM_WORKERS (default:
available cores; 1 disables multiprocessing).
"""

from __future__ import annotations

import argparse
import sys

import numpy as np

from . import __version__
from .errors import ConfigError, NumericalInvariantError, PipelineError
from .scenarios import RunReport, Scenario, SweepSpec, load_config, run_scenario, run_sweep
from .spectral import fit_rabi_scaling, infer_bm

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_NUMERICAL = 3
EXIT_AMBIGUOUS = 4


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="mollowsim",
        description="Deterministic spin-dynamics simulator for RF-dressed "
                    "helium: Mollow triplet/quintuplet spectra.",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    sim = sub.add_parser("simulate", help="run one scenario end to end")
    sim.add_argument("--config", required=True,
                     help="config file path or shipped scenario name (e.g. fig3_b1)")
    sim.add_argument("--out", required=True, help="output directory for artifacts")

    swp = sub.add_parser("sweep", help="run a parameter sweep")
    swp.add_argument("--config", required=True,
                     help="config file path or shipped sweep name (e.g. fig5_amplitude)")
    swp.add_argument("--out", required=True, help="output directory for artifacts")

    fit = sub.add_parser("fit-rabi", help="fit Rabi splitting vs drive amplitude")
    fit.add_argument("--points", required=True,
                     help="CSV with header 'bm,rabi': amplitude (nT), splitting (Hz)")

    inf = sub.add_parser("infer-bm", help="drive amplitude from a measured splitting")
    inf.add_argument("--rabi-hz", required=True, type=float,
                     help="measured Rabi splitting (Hz)")
    inf.add_argument("--gamma", required=True, type=float,
                     help="gyromagnetic ratio of the dressed manifold (Hz/nT)")

    val = sub.add_parser("validate", help="check a config without running it")
    val.add_argument("--config", required=True,
                     help="config file path or shipped name")
    return parser


def _describe(obj: Scenario | SweepSpec) -> str:
    if isinstance(obj, SweepSpec):
        return (f"{obj.name}: sweep of {obj.parameter.value} over "
                f"{len(obj.values)} points, base larmor {obj.base.larmor:g} Hz, "
                f"rabi {obj.base.rabi:g} Hz")
    return (f"{obj.name}: scenario, larmor {obj.larmor:g} Hz, rabi {obj.rabi:g} Hz, "
            f"probe {obj.probe.line.value}/{obj.probe.polarization.value}, "
            f"duration {obj.duration:g} s")


def _print_scenario_result(report: RunReport) -> int:
    if report.outcome == "NoAlignmentObservable":
        print(f"{report.name}: no alignment observable on this line "
              "(f=1/2 carries no rank-2 moment); report written")
        return EXIT_OK
    cls = report.classification
    print(f"{report.name}: {cls.structure.value}"
          + (f", center {cls.center:.3f} Hz" if cls.center is not None else "")
          + (f", splitting {cls.rabi_estimate:.3f} Hz"
             if cls.rabi_estimate is not None else ""))
    if cls.structure.value == "Other":
        print(f"  classification ambiguous: {cls.diagnostics}", file=sys.stderr)
        return EXIT_AMBIGUOUS
    return EXIT_OK


def _cmd_simulate(args) -> int:
    obj = load_config(args.config)
    if isinstance(obj, SweepSpec):
        raise ConfigError(f"{args.config} describes a sweep; use the sweep command",
                          field="kind")
    report = run_scenario(obj, out_dir=args.out)
    return _print_scenario_result(report)


def _cmd_sweep(args) -> int:
    obj = load_config(args.config)
    if isinstance(obj, Scenario):
        raise ConfigError(f"{args.config} describes a single scenario; "
                          "use the simulate command", field="kind")
    report = run_sweep(obj, out_dir=args.out)
    n_failed = sum(1 for p in report.points if p["outcome"] == "Failed")
    print(f"{report.name}: {len(report.points)} points, {n_failed} failed")
    if report.aggregate and "skipped" not in report.aggregate:
        kind = report.aggregate.get("kind")
        if kind == "rabi_scaling":
            print(f"  rabi scaling: slope {report.aggregate['slope_hz_per_nt']:.6g} Hz/nT, "
                  f"r2 {report.aggregate['r2']:.6f}")
        elif kind == "sin2theta":
            print(f"  sin(2theta) fit: amplitude {report.aggregate['amplitude_45deg']:.4g}, "
                  f"r2 {report.aggregate['r2']:.6f}")
        elif kind == "second_sideband_table":
            print(f"  second-sideband table: {len(report.aggregate['rows'])} rows")
    elif report.aggregate:
        print(f"  aggregate skipped: {report.aggregate['skipped']}")
    return EXIT_OK


def _cmd_fit_rabi(args) -> int:
    try:
        data = np.genfromtxt(args.points, delimiter=",", names=True)
    except OSError as exc:
        raise ConfigError(f"cannot read points file: {exc}") from exc
    if data.dtype.names is None or not {"bm", "rabi"} <= set(data.dtype.names):
        raise ConfigError("points CSV needs a 'bm,rabi' header row")
    bm = np.atleast_1d(data["bm"]).astype(float)
    rabi = np.atleast_1d(data["rabi"]).astype(float)
    if np.isnan(bm).any() or np.isnan(rabi).any():
        raise ConfigError("points CSV contains non-numeric entries")
    try:
        fit = fit_rabi_scaling(list(zip(bm, rabi)))
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    print(f"slope {fit.slope!r} Hz/nT")
    print(f"intercept {fit.intercept!r} Hz")
    print(f"r2 {fit.r2!r}")
    print(f"gamma estimate {2.0 * fit.slope!r} Hz/nT (slope is gamma/2)")
    return EXIT_OK


def _cmd_infer_bm(args) -> int:
    try:
        bm = infer_bm(args.rabi_hz, args.gamma)
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    print(f"bm {bm!r} nT")
    return EXIT_OK


def _cmd_validate(args) -> int:
    obj = load_config(args.config)
    print(f"OK {_describe(obj)}")
    return EXIT_OK


_COMMANDS = {
    "simulate": _cmd_simulate,
    "sweep": _cmd_sweep,
    "fit-rabi": _cmd_fit_rabi,
    "infer-bm": _cmd_infer_bm,
    "validate": _cmd_validate,
}


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        return _COMMANDS[args.command](args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except PipelineError as exc:
        if isinstance(exc.cause, NumericalInvariantError):
            print(f"numerical invariant violated: {exc}", file=sys.stderr)
            return EXIT_NUMERICAL
        print(f"pipeline error: {exc}", file=sys.stderr)
        return 1
    except NumericalInvariantError as exc:
        print(f"numerical invariant violated: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL


if __name__ == "__main__":
    sys.exit(main())
