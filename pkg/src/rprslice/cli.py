"""Command-line frontend.

Exit status: 0 success, 2 usage error, 3 invalid input or configuration,
4 numerical failure (including a census that does not match expectations).
"""
from __future__ import annotations

import argparse
import json
import logging
import math
import sys
from pathlib import Path

import numpy as np

from .kinematics import (ContinuationError, JointCoords, KinematicsError, SlicePose, forward_kinematics,
                         inverse_kinematics)
from .jointspace import ProbeFailure, VerificationFailure
from .model import REFERENCE_CONFIG_TEXT, ConfigError, Config, SliceConfig, load_config

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_VALIDATION = 3
EXIT_NUMERICAL = 4

log = logging.getLogger("rprslice")


class UsageError(Exception):
    pass


def _config(args) -> Config:
    if args.config:
        try:
            text = Path(args.config).read_text()
        except OSError as exc:
            raise ConfigError(f"cannot read config: {exc}") from None
    else:
        text = REFERENCE_CONFIG_TEXT
    cfg = load_config(text)
    rho1 = cfg.slice.rho1
    if getattr(args, "rho", None):
        if len(args.rho) != 1:
            raise UsageError("--rho takes a single value (rho1) for this command")
        rho1 = args.rho[0]
    grid = getattr(args, "grid", None) or cfg.slice.grid_n
    slc = SliceConfig(rho1, grid, cfg.slice.theta_range, cfg.slice.alpha_range)
    return Config(cfg.geometry, slc, cfg.text_hash, cfg.text)


def _angle_out(x: float, degrees: bool) -> float:
    return math.degrees(x) if degrees else x


def cmd_ik(args) -> int:
    cfg = _config(args)
    if not args.pose:
        raise UsageError("ik needs --pose THETA1 ALPHA")
    th, al = args.pose
    if args.degrees:
        th, al = math.radians(th), math.radians(al)
    j = inverse_kinematics(cfg.geometry, SlicePose(th, al, cfg.slice.rho1))
    if args.json:
        print(json.dumps({"rho1": j.rho1, "rho2": j.rho2, "rho3": j.rho3}))
    else:
        print(f"rho: {j.rho1!r} {j.rho2!r} {j.rho3!r}")
    return EXIT_OK


def cmd_fk(args) -> int:
    if not args.rho or len(args.rho) != 3:
        raise UsageError("fk needs --rho R1 R2 R3")
    args_cfg = argparse.Namespace(config=args.config, rho=None, grid=None)
    cfg = _config(args_cfg)
    sol = forward_kinematics(cfg.geometry, JointCoords(*args.rho))
    unit = "deg" if args.degrees else "rad"
    rows = [{"theta1": _angle_out(c.pose.theta1, args.degrees), "alpha": _angle_out(c.pose.alpha, args.degrees),
             "aspect": c.aspect.value, "det": c.det_j} for c in sol.solutions]
    if args.json:
        print(json.dumps({"rho": list(args.rho), "unit": unit, "count": sol.count, "solutions": rows,
                          "nonconvergence": sol.nonconvergence}))
        return EXIT_OK
    print(f"count: {sol.count}")
    for k, r in enumerate(rows, 1):
        print(f"{k}: theta1={r['theta1']!r} alpha={r['alpha']!r} {unit} aspect={r['aspect']}")
    if sol.nonconvergence:
        print("warning: some roots did not converge", file=sys.stderr)
    return EXIT_OK


def _run_analysis(args):
    from .atlas import analyze
    cfg = _config(args)
    window = args.window
    if window is not None and not (window[0] < window[1] and window[2] < window[3]):
        raise ConfigError("window bounds must be ordered: R2MIN R2MAX R3MIN R3MAX")
    return analyze(cfg, window=window)


def _print_census(report) -> None:
    for line in report.lines():
        print(line)


def cmd_analyze(args) -> int:
    from .atlas import save_atlas
    if not args.out:
        raise UsageError("analyze needs --out DIR")
    atlas = _run_analysis(args)
    out = save_atlas(atlas, args.out)
    _print_census(atlas.report)
    print(f"atlas: {out}")
    return EXIT_OK


def cmd_verify(args) -> int:
    from .atlas import save_atlas
    atlas = _run_analysis(args)
    if args.out:
        save_atlas(atlas, args.out)
    _print_census(atlas.report)
    ok = atlas.report.passed
    print("census: " + ("PASS" if ok else "FAIL"))
    return EXIT_OK if ok else EXIT_NUMERICAL


def cmd_plot(args) -> int:
    from .plot import FIGURES, plot_atlas
    if not args.out:
        raise UsageError("plot needs --out DIR (an atlas directory)")
    if args.figure not in FIGURES:
        raise UsageError(f"unknown figure {args.figure!r}; choose from {', '.join(FIGURES)}")
    if not (Path(args.out) / "manifest.json").exists():
        raise ConfigError(f"no atlas in {args.out}")
    print(plot_atlas(args.out, args.figure, args.degrees))
    return EXIT_OK


COMMANDS = {"ik": cmd_ik, "fk": cmd_fk, "analyze": cmd_analyze, "plot": cmd_plot, "verify": cmd_verify}


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="rprslice", description="Fixed-rho1 slice analysis of a planar 3-RPR manipulator.")
    p.add_argument("-v", "--verbose", action="store_true", help="log pipeline progress")
    sub = p.add_subparsers(dest="command", required=True)
    help_ = {
        "ik": "leg lengths of a pose", "fk": "all assembly modes of three leg lengths",
        "analyze": "full slice analysis, written to --out", "plot": "SVG figure from an atlas directory",
        "verify": "run the analysis and check the census",
    }
    for name in COMMANDS:
        s = sub.add_parser(name, help=help_[name])
        s.add_argument("--config", metavar="PATH", help="key = value geometry file (default: reference geometry)")
        s.add_argument("--rho", type=float, nargs="+", metavar="R", help="R1 R2 R3 for fk, R1 otherwise")
        s.add_argument("--degrees", action="store_true", help="angles in degrees")
        if name == "ik":
            s.add_argument("--pose", type=float, nargs=2, metavar=("THETA1", "ALPHA"))
        if name in ("ik", "fk"):
            s.add_argument("--json", action="store_true", help="machine-readable output")
        if name in ("analyze", "verify"):
            s.add_argument("--grid", type=int, metavar="N", help="slice grid size")
            s.add_argument("--window", type=float, nargs=4, metavar=("R2MIN", "R2MAX", "R3MIN", "R3MAX"))
        if name in ("analyze", "verify", "plot"):
            s.add_argument("--out", metavar="DIR")
        if name == "plot":
            s.add_argument("--figure", metavar="NAME", default="workspace")
    return p


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_USAGE if exc.code else EXIT_OK
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        return COMMANDS[args.command](args)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (ConfigError, KinematicsError) as exc:
        print(f"invalid input: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except (ContinuationError, VerificationFailure, ProbeFailure, np.linalg.LinAlgError, ArithmeticError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
