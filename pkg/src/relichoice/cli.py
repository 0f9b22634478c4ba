"""Command-line interface: ``relichoice <validate|analyze|curve|simulate|compare>``.

Inputs ending in ``.json`` are read as structured documents, anything else as
the text format. The name ``@datacenter`` refers to the bundled demo.
"""
from __future__ import annotations

import argparse
import csv
import enum
import json
import sys
from importlib import resources
from typing import Sequence

from relichoice import analysis, montecarlo
from relichoice.analysis import DomainError, ShapeUnsupported
from relichoice.dsl import ParseError, SchemaError, load
from relichoice.model import InvalidSpec, SystemSpec, shape_of, validate
from relichoice.report import analyze

QUANTILES = (0.9, 0.75, 0.5, 0.25, 0.1)
DEMOS = {"@datacenter": "datacenter.json", "@datacenter.rc": "datacenter.rc"}


class ExitCode(enum.IntEnum):
    OK = 0
    INVALID = 1
    DOMAIN = 2
    IO = 3


class _Fail(Exception):
    def __init__(self, code: ExitCode, message: str):
        self.code = code
        self.message = message


def demo_path(name: str = "@datacenter") -> str:
    return str(resources.files("relichoice") / "data" / DEMOS[name])


def _load(path: str) -> SystemSpec:
    if path in DEMOS:
        path = demo_path(path)
    try:
        return load(path)
    except OSError as exc:
        raise _Fail(ExitCode.IO, f"{path}: {exc.strerror or exc}") from None
    except UnicodeDecodeError as exc:
        raise _Fail(ExitCode.IO, f"{path}: {exc}") from None
    except ParseError as exc:
        raise _Fail(ExitCode.INVALID, f"{path}:{exc}") from None
    except (SchemaError, InvalidSpec) as exc:
        raise _Fail(ExitCode.INVALID, f"{path}: {exc}") from None


def _times(text: str) -> list[float]:
    try:
        return [float(x) for x in text.split(",") if x.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}")


def _rho(text: str) -> float:
    try:
        return float(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected a number, got {text!r}")


def cmd_validate(args: argparse.Namespace) -> ExitCode:
    try:
        spec = _load(args.input)
    except _Fail as exc:
        if exc.code == ExitCode.INVALID:
            print(exc.message)
            return exc.code
        raise
    violations = validate(spec)
    for v in violations:
        print(f"{args.input}: {v}")
    return ExitCode.INVALID if violations else ExitCode.OK


def cmd_analyze(args: argparse.Namespace) -> ExitCode:
    spec = _load(args.input)
    if not 0 < args.rho <= 1:
        raise _Fail(ExitCode.DOMAIN, f"--rho must lie in (0, 1], got {args.rho}")
    report = analyze(spec, args.mode, args.rho, args.sfr_at, args.rte_method)
    if args.format == "json":
        sys.stdout.write(report.to_json())
        for note in report.notes:
            print(f"note: {note}", file=sys.stderr)
    else:
        sys.stdout.write(report.to_text())
    return ExitCode.OK


def cmd_curve(args: argparse.Namespace) -> ExitCode:
    if args.steps < 2:
        raise _Fail(ExitCode.DOMAIN, "--steps must be at least 2")
    if not (0 <= args.t_from < args.t_to):
        raise _Fail(ExitCode.DOMAIN, "need 0 <= --from < --to")
    spec = _load(args.input)
    fn = {"survival": analysis.survival, "pdf": analysis.pdf, "sfr": analysis.sfr}[args.quantity]
    n = args.steps
    grid = [args.t_from + (args.t_to - args.t_from) * k / (n - 1) for k in range(n)]
    grid[-1] = args.t_to
    values = [fn(spec, t) for t in grid]
    writer = csv.writer(sys.stdout, lineterminator="\n")
    writer.writerow(["T", "value"])
    for t, v in zip(grid, values):
        writer.writerow([repr(t), repr(v)])
    return ExitCode.OK


def _config(args: argparse.Namespace) -> montecarlo.SimulationConfig:
    try:
        return montecarlo.SimulationConfig(
            args.trials, args.seed, parallel_ok=args.lanes > 1, lanes=args.lanes
        )
    except ValueError as exc:
        raise _Fail(ExitCode.DOMAIN, str(exc)) from None


def cmd_simulate(args: argparse.Namespace) -> ExitCode:
    spec = _load(args.input)
    cfg = _config(args)
    samples = montecarlo.sample_failure_times(spec, cfg)
    mean = montecarlo.estimate_mttf(spec, cfg)
    out = {
        "trials": cfg.trials,
        "seed": cfg.seed,
        "mean_failure_time": {"value": mean.value, "std_error": mean.std_error},
        "survival": [],
    }
    for t in args.at or []:
        p = float((samples > t).mean())
        out["survival"].append(
            {"t": t, "value": p, "std_error": (p * (1 - p) / cfg.trials) ** 0.5}
        )
    sys.stdout.write(json.dumps(out, indent=2) + "\n")
    return ExitCode.OK


def _paper_divergent(spec: SystemSpec, mode: str) -> bool:
    # the closed-form MTTF measures life from each component's own install time
    return mode == "paper" and shape_of(spec.root) != "nested" and any(
        c.t0 > 0 for c in spec.leaves()
    )


def cmd_compare(args: argparse.Namespace) -> ExitCode:
    if args.trials < 1000:
        raise _Fail(ExitCode.DOMAIN, "--trials must be at least 1000")
    spec = _load(args.input)
    cfg = _config(args)
    k = args.tolerance_sigmas

    mode = args.mode
    try:
        mttf = analysis.mttf(spec, mode)
        mtbf = analysis.mtbf(spec, mode)
    except ShapeUnsupported:
        mode = "numeric"
        mttf = analysis.mttf(spec, mode)
        mtbf = analysis.mtbf(spec, mode)

    times = [analysis.rte(spec, q, "numeric").reliable_until for q in QUANTILES]
    estimates = montecarlo.estimate_survival_curve(spec, times, cfg)
    mean = montecarlo.estimate_mttf(spec, cfg)

    rows = []
    for t, est in zip(times, estimates):
        rows.append((f"survival(T={t:.6g})", analysis.survival(spec, t), est, False))
    rows.append((f"MTTF [{mode}]", mttf, mean, _paper_divergent(spec, mode)))
    rows.append((f"MTBF [{mode}]", mtbf, mean, False))

    print(f"# trials={cfg.trials} seed={cfg.seed} tolerance={k:g} sigma")
    header = ("quantity", "analytic", "estimate", "std_error", "sigmas", "status")
    lines = [header]
    ok = True
    for name, exact, est, divergent in rows:
        diff = abs(est.value - exact)
        sigmas = diff / est.std_error if est.std_error > 0 else (0.0 if diff == 0 else float("inf"))
        if divergent:
            status = "documented-divergence"
        elif sigmas <= k:
            status = "ok"
        else:
            status = "FAIL"
            ok = False
        lines.append(
            (name, f"{exact:.10g}", f"{est.value:.10g}", f"{est.std_error:.3g}", f"{sigmas:.2f}", status)
        )
    widths = [max(len(row[i]) for row in lines) for i in range(len(header))]
    for row in lines:
        print("  ".join(cell.ljust(w) for cell, w in zip(row, widths)).rstrip())
    print("result: " + ("PASS" if ok else "FAIL"))
    return ExitCode.OK if ok else ExitCode.INVALID


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="relichoice",
        description="Degradation analysis of systems with probabilistic parallel choice.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("validate", help="check a system file")
    p.add_argument("input")
    p.set_defaults(func=cmd_validate)

    p = sub.add_parser("analyze", help="compute MTTF, MTBF, MTTR, SFR, pdf and RTE")
    p.add_argument("input")
    p.add_argument("--mode", choices=analysis.MODES, default="numeric")
    p.add_argument("--rho", type=_rho, default=0.9)
    p.add_argument("--sfr-at", type=_times, default=None, metavar="T[,T...]",
                   help="times for the failure rate and density (default: latest t0)")
    p.add_argument("--rte-method", choices=analysis.RTE_METHODS, default="auto")
    p.add_argument("--format", choices=("json", "text"), default="text")
    p.set_defaults(func=cmd_analyze)

    p = sub.add_parser("curve", help="CSV of survival, pdf or sfr over a time grid")
    p.add_argument("input")
    p.add_argument("--from", dest="t_from", type=float, required=True)
    p.add_argument("--to", dest="t_to", type=float, required=True)
    p.add_argument("--steps", type=int, required=True)
    p.add_argument("--quantity", choices=("survival", "pdf", "sfr"), default="survival")
    p.set_defaults(func=cmd_curve)

    for name, helptext, func in (
        ("simulate", "Monte Carlo estimates of lifetime and survival", cmd_simulate),
        ("compare", "check closed forms against Monte Carlo", cmd_compare),
    ):
        p = sub.add_parser(name, help=helptext)
        p.add_argument("input")
        p.add_argument("--trials", type=int, default=100_000)
        p.add_argument("--seed", type=int, default=0)
        p.add_argument("--lanes", type=int, default=1, help="concurrent evaluation lanes")
        if name == "simulate":
            p.add_argument("--at", type=_times, default=None, metavar="T[,T...]")
        else:
            p.add_argument("--tolerance-sigmas", type=float, default=4.0)
            p.add_argument("--mode", choices=analysis.MODES, default="numeric")
        p.set_defaults(func=func)
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        return int(args.func(args))
    except _Fail as exc:
        print(exc.message, file=sys.stderr)
        return int(exc.code)
    except (DomainError, ShapeUnsupported) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return int(ExitCode.DOMAIN)


if __name__ == "__main__":
    sys.exit(main())
