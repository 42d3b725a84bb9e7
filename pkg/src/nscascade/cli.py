"""Command-line entry point: ``nscascade {verify,build,run,report}``.

Exit codes: 0 success, 2 configuration error, 3 failed hard assertion,
4 runtime or numerical error (including I/O).
"""
from __future__ import annotations

import argparse
import csv
import json
import sys
from pathlib import Path

from . import spectral as sp
from .config import ExperimentConfig, load_config, reference_config
from .construction import (
    ConfigError,
    DegenerateInductionError,
    ResolutionError,
    assemble_u0,
    build_coefficients,
    choose_kstar,
)
from .geometry import DomainError
from .solver import run as run_experiment
from .solver import write_json

EXIT_OK, EXIT_CONFIG, EXIT_ASSERT, EXIT_RUNTIME = 0, 2, 3, 4


class AssertionFailure(Exception):
    """A hard check failed; the message names it."""


def _config(args) -> ExperimentConfig:
    cfg = load_config(args.config, check=False) if args.config else reference_config()
    if getattr(args, "snapshot_times", None):
        cfg.snapshot_times = tuple(float(x) for x in args.snapshot_times.replace(",", " ").split())
    return cfg


def _outdir(args, cfg) -> Path:
    out = Path(args.output or cfg.output)
    out.mkdir(parents=True, exist_ok=True)
    return out


def cmd_verify(args) -> int:
    from .verify import run_suite

    cfg = _config(args)
    cfg.validate()
    out = _outdir(args, cfg)
    report = run_suite(cfg)
    write_json(out / "verify.json", report)
    for r in report["checks"]:
        print(f"{'PASS' if r['passed'] else 'FAIL'}  {r['name']}")
    if not report["passed"]:
        raise AssertionFailure("failed checks: " + ", ".join(report["failed"]))
    return EXIT_OK


def build_artifacts(cfg: ExperimentConfig, out: Path):
    """Write ``scales.json``, ``coefficients.json`` and ``u0_norms.json``; return the table."""
    try:
        scales = cfg.validate()
    except ResolutionError as exc:
        # record the ladder depth that was requested before giving up
        kstar = choose_kstar(cfg.theta_star, cfg.eta_star) if cfg.k_star == "auto" else cfg.k_star
        write_json(out / "scales.json", {"k_star": kstar, "status": "unresolvable", "error": str(exc)})
        raise
    write_json(out / "scales.json", scales.to_dict())
    table = build_coefficients(scales)
    write_json(out / "coefficients.json", table.report())
    _, norms = assemble_u0(table)
    write_json(out / "u0_norms.json", norms)
    if cfg.field_snapshots != "none":
        write_construction_snapshots(table, out / "snapshots", cfg.field_snapshots == "all")
    return table, norms


def write_construction_snapshots(table, dest: Path, with_coefficients: bool) -> None:
    """Binary snapshots of ``psi_k`` and optionally every coefficient field ``a_{j,k}``."""
    dest.mkdir(parents=True, exist_ok=True)
    for k in range(table.kstar + 1):
        sp.save_snapshot(dest / f"psi_{k}.bin", table.psi(k))
    if with_coefficients:
        for k in range(1, table.kstar + 1):
            D = table.D_physical(k - 1)
            for j in range(1, 7):
                a = table.coefficient_field(j, k, D)
                sp.save_snapshot(dest / f"a_{j}_{k}.bin", sp.PeriodicField.from_physical(a[None]))
            del D
        table._dcache.clear()


def cmd_build(args) -> int:
    cfg = _config(args)
    out = _outdir(args, cfg)
    _, norms = build_artifacts(cfg, out)
    print(f"B^-1_inf,1 norm of u0: {norms['besov_B-1_inf_1']:.6g}")
    print(f"off-shell leakage: {norms['leakage']:.3g}")
    return EXIT_OK


def cmd_run(args) -> int:
    cfg = _config(args)
    out = _outdir(args, cfg)
    table, _ = build_artifacts(cfg, out)
    series, summary = run_experiment(cfg, table=table, output=out)
    print(f"status: {summary['status']}")
    for k, t in enumerate(summary["activation_times"]):
        print(f"shell {k}: activation t = {t:.6g}")
    if summary["status"] != "ok":
        print(summary.get("message", ""), file=sys.stderr)
        return EXIT_RUNTIME
    return EXIT_OK


def _write_rows(path: Path, header, rows) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        w.writerows(rows)


def cmd_report(args) -> int:
    src = Path(args.output or "out")
    summary_path = src if src.is_file() else src / "summary.json"
    with open(summary_path) as fh:
        summary = json.load(fh)
    dest = summary_path.parent
    N = summary["scales"]["N"]
    _write_rows(
        dest / "activation.csv",
        ["k", "N_k", "activation_time", "peak_amplitude"],
        [[k, N[k], t, a] for k, (t, a) in enumerate(zip(summary["activation_times"], summary["peak_amplitudes"]))],
    )
    _write_rows(dest / "checks.csv", ["check", "value"], sorted(summary["checks"].items()))
    norms = summary.get("u0_norms", {})
    _write_rows(
        dest / "u0_shells.csv",
        ["shell", "sup_amplitude"],
        list(zip(norms.get("shells", []), norms.get("shell_sup", []))),
    )
    print(f"wrote activation.csv, checks.csv, u0_shells.csv to {dest}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="nscascade", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)
    for name, fn, helptext in (
        ("verify", cmd_verify, "run the exact-identity suite"),
        ("build", cmd_build, "build the construction and report norms of u0"),
        ("run", cmd_run, "build and evolve, writing the cascade series"),
        ("report", cmd_report, "re-render summary.json as CSV tables"),
    ):
        s = sub.add_parser(name, help=helptext)
        s.set_defaults(func=fn)
        s.add_argument("--config", help="experiment file (default: built-in reference)")
        s.add_argument("--threads", type=int, default=1, help="FFT worker threads")
        s.add_argument("--output", help="output directory (report: directory or summary.json)")
        if name == "run":
            s.add_argument("--snapshot-times", help="comma-separated times for field snapshots")
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        sp.set_threads(args.threads)
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (AssertionFailure, DomainError, DegenerateInductionError) as exc:
        print(f"assertion failure: {exc}", file=sys.stderr)
        return EXIT_ASSERT
    except OSError as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    except (RuntimeError, ArithmeticError, ValueError) as exc:
        print(f"runtime error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
