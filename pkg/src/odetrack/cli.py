"""``odetrack <mode> --config <path> [--out <dir>]``.

Exit codes: 0 success, 1 configuration error, 2 run failure.
"""

from __future__ import annotations

import argparse
import csv
import json
import math
import sys
from dataclasses import dataclass, fields
from pathlib import Path
from typing import Optional

import numpy as np

from .catalog import catalog_get
from .errors import CatalogLookupError, ConfigurationError, OdetrackError
from .experiments import alpha_sweep, compare_methods, switch_flow_series
from .linalg import op_counter
from .oracle import OracleOptions
from .problem import slack_augment, slack_lift_point
from .tracker import TrackerConfig, track

MODES = ("track", "compare", "fig1", "sweep")
EXIT_OK, EXIT_CONFIG, EXIT_RUN = 0, 1, 2

# per-problem horizon and starting guess used when the config leaves them out
PROBLEM_DEFAULTS = {
    "circle_linear": (0.0, math.pi, [-1.0, 0.0]),
    "pitchfork": (0.5, 4.0, [0.8]),
    "quartic_switch": (0.0, 20.0, [-4.0]),
    "clamped_quadratic": (0.0, 3.0, [-1.0]),
}

_TRACKER_FIELDS = ("alpha", "rho", "outer_step", "inner_step", "inner_threshold",
                   "inner_max_iters", "init_tol", "outer_scheme")


@dataclass
class RunConfig:
    mode: Optional[str] = None
    problem: str = "circle_linear"
    t0: Optional[float] = None
    t1: Optional[float] = None
    x_guess: Optional[list] = None
    alpha: float = 0.05
    rho: float = 50.0
    outer_step: float = 1e-3
    inner_step: Optional[float] = None
    inner_threshold: float = 1e-8
    inner_max_iters: int = 200
    init_tol: float = 1e-10
    outer_scheme: str = "relaxed"
    oracle: bool = False
    oracle_region: Optional[list] = None
    oracle_resolution: int = 401
    delta: float = 0.01
    alphas: Optional[list] = None
    nu: float = 0.0
    horizon: float = 20.0
    step: float = 1e-3
    x0: float = -4.0
    trajectory_file: str = "trajectory.csv"
    summary_file: str = "summary.json"
    report_file: str = "compare.json"
    fig1_file: str = "fig1.csv"
    sweep_file: str = "sweep.csv"

    def tracker_config(self):
        return TrackerConfig(**{name: getattr(self, name) for name in _TRACKER_FIELDS})

    def oracle_options(self):
        region = None if self.oracle_region is None else tuple(tuple(r) for r in self.oracle_region)
        return OracleOptions(region=region, resolution=self.oracle_resolution)


def _is_number(v):
    return isinstance(v, (int, float)) and not isinstance(v, bool)


def _check_type(name, value, default):
    if value is None:
        return
    kind = type(default) if default is not None else None
    if name in ("x_guess", "alphas"):
        if not isinstance(value, list) or not all(_is_number(v) for v in value):
            raise ConfigurationError(f"{name} must be a list of numbers")
    elif name == "oracle_region":
        if not isinstance(value, list) or not all(
                isinstance(r, list) and len(r) == 2 and all(_is_number(v) for v in r) for r in value):
            raise ConfigurationError("oracle_region must be a list of [lo, hi] pairs")
    elif kind is bool:
        if not isinstance(value, bool):
            raise ConfigurationError(f"{name} must be true or false")
    elif kind is int:
        if not isinstance(value, int) or isinstance(value, bool):
            raise ConfigurationError(f"{name} must be an integer")
    elif kind is str or name == "mode":
        if not isinstance(value, str):
            raise ConfigurationError(f"{name} must be a string")
    elif not _is_number(value):
        raise ConfigurationError(f"{name} must be a number")


def parse_config(raw, mode=None) -> RunConfig:
    """Strictly parse a decoded JSON object; unknown keys are rejected."""
    if not isinstance(raw, dict):
        raise ConfigurationError("config must be a JSON object")
    known = {f.name: f for f in fields(RunConfig)}
    unknown = sorted(set(raw) - set(known))
    if unknown:
        raise ConfigurationError(f"unknown config field(s): {', '.join(unknown)}")
    for name, value in raw.items():
        _check_type(name, value, known[name].default)
    cfg = RunConfig(**raw)
    if mode is not None:
        if cfg.mode is not None and cfg.mode != mode:
            raise ConfigurationError(f"mode: config says {cfg.mode!r} but command line says {mode!r}")
        cfg.mode = mode
    if cfg.mode not in MODES:
        raise ConfigurationError(f"mode must be one of {', '.join(MODES)}")
    if cfg.mode == "fig1":
        if not cfg.horizon > 0 or not cfg.step > 0:
            raise ConfigurationError("horizon and step must be positive")
        return cfg
    problem = catalog_get(cfg.problem)
    t0, t1, guess = PROBLEM_DEFAULTS.get(cfg.problem, (None, None, None))
    cfg.t0 = t0 if cfg.t0 is None else float(cfg.t0)
    cfg.t1 = t1 if cfg.t1 is None else float(cfg.t1)
    cfg.x_guess = guess if cfg.x_guess is None else cfg.x_guess
    if cfg.t0 is None or cfg.t1 is None or cfg.x_guess is None:
        raise ConfigurationError("t0, t1 and x_guess are required for this problem")
    if not cfg.t1 > cfg.t0:
        raise ConfigurationError(f"t1 ({cfg.t1}) must be greater than t0 ({cfg.t0})")
    if len(cfg.x_guess) != problem.n:
        raise ConfigurationError(f"x_guess needs {problem.n} entries, got {len(cfg.x_guess)}")
    if cfg.mode == "sweep" and not cfg.alphas:
        raise ConfigurationError("alphas must be a non-empty list for a sweep")
    cfg.tracker_config()  # surfaces invalid tracker parameters now
    return cfg


def _tracked_problem(cfg):
    """Catalog problem in tracker form plus the lifted starting guess and original dimension."""
    problem = catalog_get(cfg.problem)
    if problem.q:
        guess = slack_lift_point(problem, cfg.x_guess, cfg.t0)
        return slack_augment(problem), guess, problem.n
    return problem, np.asarray(cfg.x_guess, dtype=float), problem.n


def _fmt(v):
    return format(float(v), ".17g")


def _write_csv(path, header, rows):
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        writer.writerows(rows)


def _write_json(path, payload):
    with open(path, "w", newline="\n") as fh:
        json.dump(payload, fh, indent=2, allow_nan=True)
        fh.write("\n")


def trajectory_rows(records, n):
    with_oracle = any(r.fstar is not None for r in records)
    header = ["t", *(f"x{i}" for i in range(n)), "f", "h_res", "kkt_res", "inner_iters"]
    if with_oracle:
        header += ["fstar", "gap"]
    rows = []
    for r in records:
        row = [_fmt(r.t), *(_fmt(v) for v in r.x[:n]), _fmt(r.f), _fmt(r.constraint_residual),
               _fmt(r.kkt_residual), str(r.inner_iterations)]
        if with_oracle:
            row += [_fmt(r.fstar), _fmt(r.gap)]
        rows.append(row)
    return header, rows


def cmd_track(cfg: RunConfig, out: Path) -> int:
    problem, guess, n = _tracked_problem(cfg)
    oracle = cfg.oracle_options() if cfg.oracle else None
    op_counter.reset()
    loop_ops = {}
    try:
        records = track(problem, cfg.tracker_config(), cfg.t0, cfg.t1, guess, oracle, stats=loop_ops)
    except OdetrackError as err:
        print(f"odetrack: tracking failed: {err}", file=sys.stderr)
        return EXIT_RUN
    header, rows = trajectory_rows(records, n)
    _write_csv(out / cfg.trajectory_file, header, rows)
    gaps = [r.gap for r in records if r.gap is not None]
    summary = {
        "max_gap": max(gaps) if gaps else None,
        "max_constraint_residual": max(r.constraint_residual for r in records),
        "final_x": [float(v) for v in records[-1].x[:n]],
        "final_f": records[-1].f,
        "total_inner_iterations": sum(r.inner_iterations for r in records),
        "op_counts": {"total": op_counter.snapshot(), "loop": loop_ops},
    }
    _write_json(out / cfg.summary_file, summary)
    return EXIT_OK


def cmd_fig1(cfg: RunConfig, out: Path) -> int:
    ts, xg, xn, flags = switch_flow_series(cfg.horizon, cfg.step, cfg.x0)
    rows = [[_fmt(t), _fmt(a), _fmt(b), str(int(k))] for t, a, b, k in zip(ts, xg, xn, flags)]
    _write_csv(out / cfg.fig1_file, ["t", "x_gradflow", "x_newton", "newton_regularized"], rows)
    if flags.any():
        print(f"odetrack: {int(flags.sum())} regularized Newton evaluations", file=sys.stderr)
    return EXIT_OK


def cmd_compare(cfg: RunConfig, out: Path) -> int:
    problem, guess, _ = _tracked_problem(cfg)
    report = compare_methods(problem, cfg.tracker_config(), cfg.t0, cfg.t1, guess, cfg.delta)
    _write_json(out / cfg.report_file, report)
    for name, method in report.get("methods", {}).items():
        if method["status"] != "ok":
            print(f"odetrack: {name} failed: {method['error']}", file=sys.stderr)
    if not report.get("ok"):
        print(f"odetrack: no method completed {report.get('error', '')}".rstrip(), file=sys.stderr)
        return EXIT_RUN
    return EXIT_OK


def cmd_sweep(cfg: RunConfig, out: Path) -> int:
    problem, guess, _ = _tracked_problem(cfg)
    rows = alpha_sweep(problem, cfg.alphas, cfg.nu, cfg.tracker_config(), cfg.t0, cfg.t1, guess,
                       cfg.oracle_options())
    lines = [[_fmt(a), _fmt(gap), _fmt(res), err] for a, gap, res, err in rows]
    _write_csv(out / cfg.sweep_file, ["alpha", "sup_gap_after_nu", "max_constraint_residual", "error"], lines)
    for a, *_, err in rows:
        if err:
            print(f"odetrack: alpha={a:g} failed: {err}", file=sys.stderr)
    return EXIT_OK


COMMANDS = {"track": cmd_track, "compare": cmd_compare, "fig1": cmd_fig1, "sweep": cmd_sweep}


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        # usage mistakes are configuration errors, not run failures
        self.print_usage(sys.stderr)
        self.exit(EXIT_CONFIG, f"{self.prog}: error: {message}\n")


def build_parser():
    parser = _Parser(prog="odetrack", description=__doc__.splitlines()[0])
    parser.add_argument("mode", choices=MODES)
    parser.add_argument("--config", required=True, type=Path, help="JSON run configuration")
    parser.add_argument("--out", default=Path("."), type=Path, help="output directory (default: .)")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        raw = json.loads(args.config.read_text())
        cfg = parse_config(raw, args.mode)
    except (OSError, json.JSONDecodeError) as err:
        print(f"odetrack: cannot read config: {err}", file=sys.stderr)
        return EXIT_CONFIG
    except (ConfigurationError, CatalogLookupError) as err:
        print(f"odetrack: config error: {err}", file=sys.stderr)
        return EXIT_CONFIG
    try:
        args.out.mkdir(parents=True, exist_ok=True)
    except OSError as err:
        print(f"odetrack: cannot create output directory: {err}", file=sys.stderr)
        return EXIT_CONFIG
    return COMMANDS[cfg.mode](cfg, args.out)


if __name__ == "__main__":
    sys.exit(main())
