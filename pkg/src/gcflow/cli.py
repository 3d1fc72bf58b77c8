"""Command line entry point.

Exit status: 0 success/pass, 1 violation or blowup detected (inverted by
--expect-blowup), 2 usage or configuration error.
"""
from __future__ import annotations

import argparse
import glob
import json
import os
import sys

from . import io
from .config import STAGES, ConfigError, ExperimentConfig, load_config

EXIT_OK, EXIT_VIOLATION, EXIT_USAGE = 0, 1, 2

COMMANDS = {
    "check": ("check",),
    "solve-ode": ("solve-ode",),
    "solve-pde": ("solve-pde",),
    "certify": ("certify",),
    "glue": ("glue",),
    "immerse": ("immerse",),
    "run": None,
}


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        raise SystemExit(EXIT_USAGE)


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", metavar="PATH",
                        help="experiment config (key = value with sections)")
    common.add_argument("--out", metavar="DIR", help="output directory (GCFLOW_OUT overrides)")
    common.add_argument("--expect-blowup", action="store_true",
                        help="invert the verdict: a detected violation/blowup exits 0")
    common.add_argument("--resolution-scale", type=float, metavar="F",
                        help="multiply grid resolution by F")
    p = _Parser(prog="gcflow", description="Negatively curved surface immersion laboratory.")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)
    helps = {
        "check": "test the decay hypotheses of the curvature profile",
        "solve-ode": "integrate the x-independent invariant ODE and locate blowup",
        "solve-pde": "small-data and tail solves of the invariant system",
        "certify": "monitor the control-function bounds on the tail solve",
        "glue": "geodesic-to-polar transform and boundary traces",
        "immerse": "reconstruct the surface mesh",
        "run": "run the stages listed in the config (or --stage)",
        "report": "merge the CSV outputs of a run directory into one summary",
    }
    for name, text in helps.items():
        sp = sub.add_parser(name, parents=[common], help=text, description=text)
        if name == "run":
            sp.add_argument("--stage", metavar="NAME[,NAME...]",
                            help=f"subset of: {','.join(STAGES)}")
    return p


def _out_dir(args, cfg) -> str:
    return os.environ.get("GCFLOW_OUT") or args.out or cfg.run.out


def _summarize(out_dir: str) -> int:
    report_path = os.path.join(out_dir, "report.json")
    if not os.path.exists(report_path):
        print(f"no report.json in {out_dir}", file=sys.stderr)
        return EXIT_USAGE
    with open(report_path, encoding="utf-8") as fh:
        report = json.load(fh)
    rows = []
    for path in sorted(glob.glob(os.path.join(out_dir, "*.csv"))):
        if os.path.basename(path) == "summary.csv":
            continue
        with open(path, encoding="utf-8") as fh:
            header = fh.readline().rstrip("\n")
            n = sum(1 for _ in fh)
        rows.append((os.path.basename(path), n, header.replace(",", " "), io.sha256_file(path)))
    lines = ["file,rows,columns,sha256"] + [f"{a},{b},{c},{d}" for a, b, c, d in rows]
    for name, st in report["stages"].items():
        lines.append(f"stage:{name},{st['status']},,")
    io.write_text(os.path.join(out_dir, "summary.csv"), "\n".join(lines) + "\n")
    for name, st in report["stages"].items():
        print(f"{name:10s} {st['status']}")
    print(f"certified: {str(report.get('certified', False)).lower()}")
    bad = any(st["status"] in ("violation", "error") for st in report["stages"].values())
    return EXIT_VIOLATION if bad else EXIT_OK


def main(argv=None) -> int:
    from .pipeline import run_experiment

    try:
        args = build_parser().parse_args(argv)
    except SystemExit as exc:
        return int(exc.code) if exc.code is not None else EXIT_OK
    try:
        cfg = load_config(args.config) if args.config else ExperimentConfig()
        if args.resolution_scale is not None:
            if not args.resolution_scale > 0:
                raise ConfigError("--resolution-scale must be positive")
            cfg.run.resolution_scale = args.resolution_scale
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    out = _out_dir(args, cfg)
    if args.command == "report":
        return _summarize(out)
    stages = COMMANDS[args.command]
    if stages is None:
        stages = cfg.run.stages
        if getattr(args, "stage", None):
            stages = tuple(s.strip() for s in args.stage.split(",") if s.strip())
            bad = [s for s in stages if s not in STAGES]
            if bad:
                print(f"unknown stage(s): {', '.join(bad)}", file=sys.stderr)
                return EXIT_USAGE
    report = run_experiment(cfg, out, stages)
    for name, st in report.stages.items():
        line = f"{name:10s} {st.status}"
        if st.message:
            line += f"  ({st.message})"
        print(line)
    print(f"report: {os.path.join(out, 'report.json')}")
    if report.failed:
        return EXIT_USAGE if any("ConfigurationError" in s.message
                                 for s in report.stages.values()) else EXIT_VIOLATION
    detected = report.violation
    if args.expect_blowup:
        return EXIT_OK if detected else EXIT_VIOLATION
    return EXIT_VIOLATION if detected else EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
