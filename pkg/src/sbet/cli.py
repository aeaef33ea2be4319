"""``sbet`` command line.

Each invocation creates a fresh run directory under ``--out`` (never reusing
an existing one), echoes the resolved config there, and writes CSV outputs
with JSON sidecars plus ``report.json``. Exit codes: 0 success or verify
pass, 1 verify fail, 2 configuration/validation error, 3 numerical error.
"""

from __future__ import annotations

import argparse
import itertools
import logging
import sys
from pathlib import Path

from .config import TASKS, RunConfig, config_hash, dump_config, parse_config, with_overrides
from .errors import NumericalError, SbetError, ValidationError
from .grid import TwoTimeField
from .io import write_field, write_json, write_series
from .pipeline import Artifact, ClassicalWorkflow, Timer, bath_correlations, workflow_for
from .verify import VerifyReport, _ensemble_checks, _jsonable, run_verify

__all__ = ["main", "build_parser", "run", "EXIT_OK", "EXIT_VERIFY_FAIL", "EXIT_CONFIG", "EXIT_NUMERICAL"]

EXIT_OK, EXIT_VERIFY_FAIL, EXIT_CONFIG, EXIT_NUMERICAL = 0, 1, 2, 3

log = logging.getLogger("sbet")


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="sbet", description="System-bath entanglement correlations and their oracles.")
    sub = p.add_subparsers(dest="command", required=True)
    helps = {
        "bath-corr": "tabulate bath kernels",
        "sbet-boson": "bosonic system-bath correlations from reduced inputs",
        "sbet-fermion": "fermionic lead-impurity correlations from reduced inputs",
        "classical": "classical SBET plus Langevin ensemble",
        "oracle": "exact correlations of the discretised model",
        "verify": "compare SBET with the oracle and judge tolerances",
    }
    for name in TASKS:
        s = sub.add_parser(name, help=helps[name])
        s.add_argument("--config", required=True, type=Path, help="YAML run configuration")
        s.add_argument("--out", default=None, help="parent directory for run directories (overrides config 'out')")
        s.add_argument("--seed", type=int, default=None, help="random seed (overrides config)")
        s.add_argument("--dt", type=float, default=None, help="time step (overrides grid.dt)")
        s.add_argument("--tmax", type=float, default=None, help="output horizon (overrides grid.t_max)")
        s.add_argument("-v", "--verbose", action="store_true")
    return p


def make_run_dir(parent, stem: str) -> Path:
    parent = Path(parent)
    parent.mkdir(parents=True, exist_ok=True)
    for k in itertools.count(1):
        path = parent / f"{stem}-{k:03d}"
        try:
            path.mkdir()
        except FileExistsError:
            continue
        return path


def _write(dirpath: Path, arts: dict, chash: str):
    dirpath.mkdir(exist_ok=True)
    for name in sorted(arts):
        a: Artifact = arts[name]
        meta = {**a.meta, "name": a.name, "config_hash": chash}
        if isinstance(a.data, TwoTimeField):
            write_field(dirpath / name, a.data, meta)
        else:
            write_series(dirpath / name, a.data, meta, stderr=a.stderr)


def _prepare(cfg: RunConfig, run_dir: Path) -> str:
    chash = config_hash(cfg)
    (run_dir / "config.yaml").write_text(dump_config(cfg))
    return chash


def run(cfg: RunConfig, run_dir: Path) -> int:
    """Execute ``cfg.task`` into ``run_dir``; returns the exit code."""
    chash = _prepare(cfg, run_dir)
    timer = Timer()
    summary = {"task": cfg.task, "fixture": cfg.fixture, "config_hash": chash}
    code = EXIT_OK
    if cfg.task == "verify":
        out = run_verify(cfg)
        _write(run_dir / "oracle", out.oracle, chash)
        _write(run_dir / "sbet", out.sbet, chash)
        _write(run_dir / "diff", out.diffs, chash)
        if out.extra:
            _write(run_dir / "ensemble", out.extra, chash)
        (run_dir / "report.json").write_text(out.report.to_json())
        write_json(run_dir / "timing.json", out.timing)
        _print_report(out.report)
        return EXIT_OK if out.report.passed else EXIT_VERIFY_FAIL
    if cfg.task == "bath-corr":
        with timer("bath-corr"):
            arts, diag = bath_correlations(cfg)
        _write(run_dir / "bath", arts, chash)
        summary["diagnostics"] = diag
    else:
        wf = workflow_for(cfg)
        if cfg.task == "oracle":
            with timer("oracle"):
                _, inputs, ref, diag = wf.oracle()
            _write(run_dir / "inputs", inputs, chash)
            _write(run_dir / "oracle", ref, chash)
            summary["diagnostics"] = diag
            if isinstance(wf, ClassicalWorkflow) and cfg.classical.ensemble:
                with timer("ensemble"):
                    _, ens, ediag = wf.ensemble()
                _write(run_dir / "ensemble", ens, chash)
                summary["ensemble"] = ediag
        else:
            with timer("inputs"):
                if cfg.inputs.files:
                    C = wf.ingest()
                    summary["ingestion"] = dict(C.diagnostics)
                else:
                    C = wf.oracle()[0]
            with timer("sbet"):
                arts, diag = wf.sbet(C)
            _write(run_dir / "sbet", arts, chash)
            summary["diagnostics"] = diag
            if isinstance(wf, ClassicalWorkflow) and cfg.classical.ensemble:
                with timer("ensemble"):
                    est, ens, ediag = wf.ensemble()
                _write(run_dir / "ensemble", ens, chash)
                rep = VerifyReport(cfg.task, cfg.fixture, chash, wf.kind)
                _ensemble_checks(rep, est, arts, cfg)
                summary["ensemble"] = ediag
                summary["ensemble_checks"] = rep.to_dict()["checks"]
    write_json(run_dir / "report.json", _jsonable(summary))
    write_json(run_dir / "timing.json", timer.seconds)
    print(f"{cfg.task}: wrote {run_dir}")
    return code


def _print_report(rep: VerifyReport):
    for c in rep.checks:
        mark = "PASS" if c.passed else "FAIL"
        print(f"{mark} {c.name:40s} {c.metric:8s} {c.value:.3e} (tol {c.tolerance:.1e})")
    print(f"verdict: {rep.verdict} ({sum(c.passed for c in rep.checks)}/{len(rep.checks)} checks)")


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = parse_config(args.config)
        cfg = with_overrides(cfg, task=args.command, seed=args.seed, dt=args.dt, t_max=args.tmax, out=args.out)
        stem = f"{cfg.task}-{cfg.fixture or 'custom'}-{config_hash(cfg)[:10]}"
        run_dir = make_run_dir(cfg.out, stem)
    except ValidationError as exc:
        print(f"sbet: configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    try:
        return run(cfg, run_dir)
    except SbetError as exc:
        code = EXIT_CONFIG if isinstance(exc, ValidationError) else EXIT_NUMERICAL
        write_json(run_dir / "error.json", _jsonable({"error": type(exc).__name__, "message": str(exc), "exit_code": code, "diagnostic": getattr(exc, "diagnostic", {})}))
        _report_error(exc)
        return code


def _report_error(exc: SbetError):
    if isinstance(exc, ValidationError):
        print(f"sbet: configuration error: {exc}", file=sys.stderr)
    elif isinstance(exc, NumericalError):
        print(f"sbet: numerical error: {exc}", file=sys.stderr)
        if exc.diagnostic:
            print(f"sbet: diagnostic: {exc.diagnostic}", file=sys.stderr)
    else:
        print(f"sbet: error: {exc}", file=sys.stderr)


if __name__ == "__main__":
    sys.exit(main())
