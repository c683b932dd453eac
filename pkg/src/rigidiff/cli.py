"""Command-line entry point.

Exit codes: 0 success, 1 check failure, 2 usage or configuration error,
3 runtime divergence (non-finite state or loss).
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import math
import sys
from pathlib import Path

import numpy as np

from rigidiff import bench
from rigidiff.config import ConfigError, TaskConfig, load_config
from rigidiff.drone import SimulationDiverged, rollout
from rigidiff.trajopt import (
    ControlSequence,
    OptimizationDiverged,
    finite_difference_gradient,
    loss_gradient,
    optimize,
)

EXIT_OK = 0
EXIT_CHECK_FAILED = 1
EXIT_USAGE = 2
EXIT_DIVERGED = 3

MAX_CHECK_HORIZON = 10
GRAD_RTOL = 1e-5
GRAD_MIN_MAGNITUDE = 1e-8
FD_DIGITS = 40

TRAJECTORY_COLUMNS = ("k", "t", "px", "py", "pz", "vx", "vy", "vz", "qx", "qy", "qz", "qw", "wx", "wy", "wz")
CONTROL_COLUMNS = ("k", "tau_x", "tau_y", "tau_z", "thrust")

log = logging.getLogger("rigidiff")


def _fmt(x) -> str:
    return format(float(x), ".17g")


def _write_csv(path: Path, header, rows) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        w.writerows(rows)


def write_trajectory(path: Path, states, dt: float) -> None:
    rows = []
    for k, s in enumerate(states):
        px, py, pz, vx, vy, vz, qx, qy, qz, qw, wx, wy, wz = s.values()
        rows.append([k, _fmt(k * dt)] + [_fmt(c) for c in (px, py, pz, vx, vy, vz, qx, qy, qz, qw, wx, wy, wz)])
    _write_csv(path, TRAJECTORY_COLUMNS, rows)


def write_controls(path: Path, u: ControlSequence) -> None:
    rows = []
    for k, c in enumerate(u.inputs()):
        rows.append([k, _fmt(c.tau[0]), _fmt(c.tau[1]), _fmt(c.tau[2]), _fmt(c.thrust)])
    _write_csv(path, CONTROL_COLUMNS, rows)


def read_controls(path: Path, horizon: int) -> ControlSequence:
    with open(path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    if len(rows) != horizon:
        raise ConfigError("controls", f"expected {horizon} rows, found {len(rows)}")
    torques, thrusts = [], []
    for i, r in enumerate(rows):
        try:
            torques.append((float(r["tau_x"]), float(r["tau_y"]), float(r["tau_z"])))
            thrusts.append(float(r["thrust"]))
        except (KeyError, TypeError, ValueError):
            raise ConfigError("controls", f"row {i} is malformed") from None
        if not thrusts[-1] > 0.0:
            raise ConfigError("controls", f"row {i}: thrust must be positive")
    return ControlSequence.from_controls(torques, thrusts)


def _load(path: str) -> TaskConfig:
    p = Path(path)
    if not p.is_file():
        raise ConfigError("<file>", f"config file not found: {path}")
    return load_config(p)


def _out_dir(args) -> Path:
    d = Path(args.out_dir)
    d.mkdir(parents=True, exist_ok=True)
    return d


# commands


def cmd_bench(args) -> int:
    ops = args.op or list(bench.OPERATIONS)
    try:
        spec = bench.BenchSpec(
            operations=ops,
            n_grid=args.n_grid,
            strategies=args.strategies,
            warmup=args.warmup,
            repetitions=args.reps,
            seed=args.seed,
            **({"workers": args.workers} if args.workers else {}),
        )
    except ValueError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_USAGE
    diagnostics: list[str] = []
    records = bench.run_bench(spec, diagnostics)
    for msg in diagnostics:
        print(f"warning: {msg}", file=sys.stderr)
    if not records:
        print("error: every configuration was skipped", file=sys.stderr)
        return EXIT_DIVERGED
    data = bench.emit_csv(records)
    if args.out == "-":
        sys.stdout.write(data.decode())
    else:
        Path(args.out).write_bytes(data)
    return EXIT_OK


def cmd_simulate(args) -> int:
    cfg = _load(args.config)
    u = read_controls(Path(args.controls), cfg.horizon) if args.controls else cfg.initial_controls()
    try:
        states = rollout(cfg.drone, cfg.initial_state, u.inputs(), check_finite=True)
    except SimulationDiverged as e:
        print(f"error: simulation diverged at step {e.step}", file=sys.stderr)
        return EXIT_DIVERGED
    out = _out_dir(args)
    write_trajectory(out / cfg.outputs["trajectory"], states, cfg.drone.dt)
    dev = max(abs(math.sqrt(sum(c * c for c in s.q.as_quat())) - 1.0) for s in states)
    final = states[-1].values()
    summary = {
        "final_state": {
            "position": final[0:3],
            "velocity": final[3:6],
            "attitude": final[6:10],
            "omega": final[10:13],
        },
        "max_norm_deviation": dev,
        "steps": len(states) - 1,
    }
    (out / cfg.outputs["summary"]).write_text(json.dumps(summary, indent=2) + "\n")
    print(f"simulated {len(states) - 1} steps; max |q| deviation {dev:.3g}")
    return EXIT_OK


def gradient_report(cfg: TaskConfig, corrupt: bool = False, digits: int | None = FD_DIGITS):
    u = cfg.initial_controls()
    ad = loss_gradient(cfg.drone, cfg.initial_state, u, cfg.reference)
    if corrupt:
        # negative control for the checker itself
        k = int(np.argmax(np.abs(ad)))
        ad = ad.copy()
        ad[k] *= 1.01
    fd = finite_difference_gradient(cfg.drone, cfg.initial_state, u, cfg.reference, digits=digits)
    mag = np.maximum(np.abs(ad), np.abs(fd))
    rel = np.where(mag > GRAD_MIN_MAGNITUDE, np.abs(ad - fd) / np.where(mag > 0, mag, 1.0), 0.0)
    return ad, fd, rel


def cmd_check_grad(args) -> int:
    cfg = _load(args.config)
    if cfg.horizon > MAX_CHECK_HORIZON:
        print(f"error: horizon {cfg.horizon} exceeds {MAX_CHECK_HORIZON} for gradient checking", file=sys.stderr)
        return EXIT_USAGE
    ad, fd, rel = gradient_report(cfg, corrupt=args.corrupt_gradient, digits=args.fd_digits or None)
    print(f"{'i':>4} {'autodiff':>24} {'finite-diff':>24} {'rel-err':>10}")
    for i, (a, f, r) in enumerate(zip(ad, fd, rel)):
        print(f"{i:>4} {a:>24.17g} {f:>24.17g} {r:>10.3g}")
    worst = float(rel.max()) if rel.size else 0.0
    ok = worst < GRAD_RTOL
    print(f"max relative error {worst:.3g} ({'PASS' if ok else 'FAIL'}, tolerance {GRAD_RTOL:g})")
    return EXIT_OK if ok else EXIT_CHECK_FAILED


def cmd_optimize(args) -> int:
    cfg = _load(args.config)
    u0 = cfg.initial_controls()
    try:
        res = optimize(cfg.drone, cfg.initial_state, u0, cfg.reference, cfg.optimizer)
    except OptimizationDiverged as e:
        print(f"error: optimization diverged at iteration {e.iteration}", file=sys.stderr)
        return EXIT_DIVERGED
    try:
        states = rollout(cfg.drone, cfg.initial_state, res.controls.inputs(), check_finite=True)
    except SimulationDiverged as e:
        print(f"error: optimized rollout diverged at step {e.step}", file=sys.stderr)
        return EXIT_DIVERGED
    out = _out_dir(args)
    write_controls(out / cfg.outputs["controls"], res.controls)
    write_trajectory(out / cfg.outputs["trajectory"], states, cfg.drone.dt)
    _write_csv(
        out / cfg.outputs["loss_history"],
        ("iteration", "loss"),
        [[i, _fmt(f)] for i, f in enumerate(res.history)],
    )
    print(f"initial loss {_fmt(res.history[0])}")
    print(f"final loss {_fmt(res.best_loss)} (best of {res.iterations} iterations)")
    return EXIT_OK


def _int_list(text: str) -> list[int]:
    try:
        return [int(float(t)) for t in text.split(",") if t.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from None


def _str_list(choices):
    def parse(text: str) -> list[str]:
        items = [t.strip() for t in text.split(",") if t.strip()]
        bad = [t for t in items if t not in choices]
        if bad or not items:
            raise argparse.ArgumentTypeError(f"invalid choice(s) {bad}; choose from {', '.join(choices)}")
        return items

    return parse


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="rigidiff", description="Rotation benchmarks, quadrotor simulation and trajectory optimization.")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    b = sub.add_parser("bench", help="time compose/apply versus batch size")
    b.add_argument("--op", action="append", choices=bench.OPERATIONS, help="repeatable; default all")
    b.add_argument("--strategies", type=_str_list(bench.STRATEGIES), default=list(bench.STRATEGIES))
    b.add_argument("--n-grid", type=_int_list, default=list(bench.DEFAULT_GRID))
    b.add_argument("--reps", type=int, default=5)
    b.add_argument("--warmup", type=int, default=1)
    b.add_argument("--seed", type=int, default=0)
    b.add_argument("--workers", type=int, default=0, help="threads for parallel-batch; default cpu count")
    b.add_argument("--out", default="-", help="CSV path, '-' for stdout")
    b.set_defaults(func=cmd_bench)

    s = sub.add_parser("simulate", help="roll out a configured task")
    s.add_argument("config")
    s.add_argument("--controls", help="CSV with k,tau_x,tau_y,tau_z,thrust; default hover")
    s.add_argument("--out-dir", default=".")
    s.set_defaults(func=cmd_simulate)

    g = sub.add_parser("check-grad", help="compare autodiff and finite-difference gradients")
    g.add_argument("config")
    g.add_argument(
        "--fd-digits",
        type=int,
        default=FD_DIGITS,
        help="decimal digits for the finite-difference loss evaluations; 0 for plain double",
    )
    g.add_argument("--corrupt-gradient", action="store_true", help=argparse.SUPPRESS)
    g.set_defaults(func=cmd_check_grad)

    o = sub.add_parser("optimize", help="optimize the control sequence of a task")
    o.add_argument("config")
    o.add_argument("--out-dir", default=".")
    o.set_defaults(func=cmd_optimize)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return int(e.code) if e.code is not None else EXIT_OK
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    try:
        return args.func(args)
    except ConfigError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
