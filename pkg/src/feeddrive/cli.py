"""Command-line front end.

Exit status: 0 success, 1 domain error (bad values, divergence, missing
files), 2 usage error. Every output file starts with a metadata header (tool
version, seed, config digest); numbers are written with 9 significant digits.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import json
import logging
import math
import os
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .config import ConfigError, RunConfig, data_path, load_config, validate_catalog
from .controller import ControlGains
from .frequency import DEFAULT_GRID, loop_response, stability_report
from .metrics import evaluate
from .motion import plan, reciprocate, sample
from .optimize.space import SearchSpace
from .optimize.tuning import CONSTRAINED, MODES, UNCONSTRAINED, TuningScenario, cross_validate, tune
from .simulation import TRACE_COLUMNS, DivergenceError, run_closed_loop
from .sweep import format_value, relative_changes, run_sweep, trend_report, write_rows_csv

log = logging.getLogger("feeddrive")

EXIT_OK, EXIT_DOMAIN, EXIT_USAGE = 0, 1, 2


class UsageError(Exception):
    pass


# ------------------------------------------------------------------ output

def _fmt(x) -> str:
    return format_value(float(x) if isinstance(x, (np.floating, np.integer)) else x)


def _round9(obj):
    """Floats to 9 significant digits, recursively, for JSON output."""
    if isinstance(obj, dict):
        return {k: _round9(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_round9(v) for v in obj]
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (float, np.floating)):
        x = float(obj)
        return float(format(x, ".9g")) if math.isfinite(x) else x
    if isinstance(obj, np.integer):
        return int(obj)
    return obj


def _header(seed, digest: str) -> dict:
    return {"tool": "feeddrive", "version": __version__,
            "seed": "none" if seed is None else seed, "config_sha256": digest}


def _open_out(path):
    if path is None or str(path) == "-":
        return sys.stdout, False
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    return open(path, "w", newline=""), True


def write_csv(path, header: dict, columns, rows) -> None:
    fh, close = _open_out(path)
    try:
        for key, value in header.items():
            fh.write(f"# {key}: {value}\n")
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(columns)
        for row in rows:
            writer.writerow([_fmt(v) for v in row])
    finally:
        if close:
            fh.close()


def write_json(path, header: dict, payload: dict) -> None:
    fh, close = _open_out(path)
    try:
        json.dump(_round9({"meta": header, **payload}), fh, indent=2)
        fh.write("\n")
    finally:
        if close:
            fh.close()


def _digest_of(obj) -> str:
    return hashlib.sha256(json.dumps(obj, sort_keys=True).encode()).hexdigest()


# ----------------------------------------------------------------- helpers

def _config(args) -> RunConfig:
    return load_config(args.config)


def _gains(args, cfg: RunConfig) -> ControlGains:
    if args.gains:
        parts = args.gains.split(",")
        if len(parts) != 4:
            raise UsageError("--gains expects kp,kvp,kvi,kfv")
        try:
            return ControlGains(*(float(p) for p in parts))
        except ValueError as exc:
            raise ConfigError(f"--gains: {exc}") from None
    if cfg.gains is None:
        raise ConfigError("gains: config has no gains block; pass --gains kp,kvp,kvi,kfv")
    return cfg.gains


def _motor(args, cfg: RunConfig):
    if args.motor is None:
        return cfg.motor
    for m in cfg.catalog:
        if m.id == args.motor:
            return m
    raise ConfigError(f"--motor: id {args.motor!r} not in catalog")


def _process(args, cfg: RunConfig):
    speed = args.speed if args.speed is not None else cfg.process.speeds[0]
    accel = args.accel if args.accel is not None else cfg.process.accelerations[0]
    return speed, accel


def _trajectory(cfg: RunConfig, speed, accel):
    return cfg.process.trajectory(speed, accel, cfg.sim.dt)


def _seed(args, cfg: RunConfig) -> int:
    seed = args.seed if args.seed is not None else cfg.optimizer.seed
    log.info("seed = %s%s", seed, "" if args.seed is not None else " (from config)")
    return seed


# ---------------------------------------------------------------- commands

def cmd_plan(args) -> int:
    profile = plan(args.distance, args.speed, args.accel * 1000.0)
    if args.reciprocate:
        traj = reciprocate(profile, args.cycles, args.dwell, args.dt)
        t, pos, vel, acc = traj.time, traj.position, traj.velocity, traj.acceleration
    else:
        n = int(math.floor(profile.t3 / args.dt + 1e-9)) + 1
        t = np.arange(n) * args.dt
        pos, vel, acc = sample(profile, t)
    params = {"distance_mm": args.distance, "speed_mm_per_s": args.speed, "accel_m_per_s2": args.accel,
              "dt_s": args.dt, "reciprocate": args.reciprocate, "cycles": args.cycles, "dwell_s": args.dwell}
    header = _header(None, _digest_of(params))
    header["profile"] = (f"{profile.shape} t1={_fmt(profile.t1)} t2={_fmt(profile.t2)} "
                         f"t3={_fmt(profile.t3)} peak_velocity={_fmt(profile.peak_velocity)}")
    write_csv(args.output, header, ("t", "pos_cmd", "vel_cmd", "acc_cmd"), zip(t, pos, vel, acc))
    return EXIT_OK


def cmd_simulate(args) -> int:
    cfg = _config(args)
    motor = _motor(args, cfg)
    speed, accel = _process(args, cfg)
    gains = _gains(args, cfg)
    params = cfg.params(motor)
    traj = _trajectory(cfg, speed, accel)
    trace = run_closed_loop(params, gains, traj, cfg.sim)
    report = evaluate(trace)
    header = _header(None, cfg.digest())
    write_csv(args.output, header, TRACE_COLUMNS, trace.columns())
    meta = {"motor_id": motor.id, "speed_mm_per_s": speed, "accel_m_per_s2": accel,
            "profile_id": traj.label, "gains": gains.to_dict(), "samples": len(trace),
            "dt_s": cfg.sim.dt, "columns": list(TRACE_COLUMNS), "report": report.to_dict()}
    sidecar = args.meta or (None if args.output in (None, "-") else f"{args.output}.json")
    if sidecar:
        write_json(sidecar, header, meta)
    else:
        print(json.dumps(_round9(report.to_dict())), file=sys.stderr)
    return EXIT_OK


def cmd_bode(args) -> int:
    cfg = _config(args)
    motor = _motor(args, cfg)
    gains = _gains(args, cfg)
    params = cfg.params(motor)
    response = loop_response(params, gains, DEFAULT_GRID, cfg.sim.velocity_feedback)
    mag_db = 20.0 * np.log10(np.abs(response))
    phase = np.degrees(np.unwrap(np.angle(response)))
    header = _header(None, cfg.digest())
    write_csv(args.output, header, ("omega_rad_s", "magnitude_db", "phase_deg"),
              zip(DEFAULT_GRID.omega, mag_db, phase))
    report = stability_report(params, gains, DEFAULT_GRID, cfg.sim.velocity_feedback)
    payload = {"motor_id": motor.id, "gains": gains.to_dict(), "stability": report.to_dict()}
    if args.json:
        write_json(args.json, header, payload)
    else:
        print(json.dumps(_round9(report.to_dict())), file=sys.stderr)
    return EXIT_OK


def cmd_tune(args) -> int:
    cfg = _config(args)
    motor = _motor(args, cfg)
    speed, accel = _process(args, cfg)
    seed = _seed(args, cfg)
    budget = args.budget if args.budget is not None else cfg.optimizer.budget
    algorithm = args.algorithm or cfg.optimizer.algorithm
    mode = args.mode or cfg.optimizer.modes[0]
    space = SearchSpace.gains(cfg.optimizer.bounds_dict())
    scenario = TuningScenario(cfg.params(motor), _trajectory(cfg, speed, accel), cfg.sim, mode)
    algorithms = ("fwa", "ga") if algorithm == "both" else (algorithm,)
    # the GA gets the next seed so the two runs draw independent streams
    results = {alg: tune(scenario, alg, budget, seed + k, space) for k, alg in enumerate(algorithms)}

    out = Path(args.out_dir or cfg.output_dir)
    header = _header(seed, cfg.digest())
    payload = {"motor_id": motor.id, "speed_mm_per_s": speed, "accel_m_per_s2": accel,
               "budget": budget, "results": {a: r.to_dict() for a, r in results.items()}}
    if len(results) == 2:
        payload["cross_validation"] = cross_validate(results["fwa"], results["ga"],
                                                     cfg.optimizer.tolerance).to_dict()
    write_json(out / "tune_result.json", header, payload)
    rows = [(alg, gen, value) for alg, r in results.items() for gen, value in enumerate(r.history)]
    write_csv(out / "tune_history.csv", header, ("algorithm", "generation", "best_value"), rows)
    for alg, r in results.items():
        print(f"{alg}: W={_fmt(r.best_W)} value={_fmt(r.best_value)} gains={r.best_gains.to_dict()}")
    return EXIT_OK


def _mode_list(choice: str | None, cfg: RunConfig) -> tuple:
    if choice is None:
        return cfg.optimizer.modes
    return MODES if choice == "both" else (choice,)


def cmd_sweep(args) -> int:
    cfg = load_config(args.config or data_path("default.yaml"))
    seed = _seed(args, cfg)
    budget = args.budget if args.budget is not None else cfg.optimizer.budget
    modes = _mode_list(args.modes, cfg)
    workers = args.workers or cfg.optimizer.workers
    protocol = args.protocol or cfg.optimizer.protocol
    space = SearchSpace.gains(cfg.optimizer.bounds_dict())

    def progress(done, total):
        log.info("cell %d/%d", done, total)

    result = run_sweep(cfg.catalog, cfg.template(), cfg.process, modes, budget, seed, sim=cfg.sim,
                       protocol=protocol, tolerance=cfg.optimizer.tolerance, space=space,
                       workers=workers, progress=progress)
    out = Path(args.out_dir or cfg.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    header = _header(seed, cfg.digest())
    header["budget"] = budget
    header["protocol"] = protocol
    with open(out / "sweep.csv", "w", newline="") as fh:
        for key, value in header.items():
            fh.write(f"# {key}: {value}\n")
        write_rows_csv(fh, result.rows)
    trends = trend_report(result)
    changes = relative_changes(result)
    write_json(out / "trend_report.json", header,
               {"trends": [t.to_dict() for t in trends], "relative_change": changes})
    if args.emit_plotdata:
        plot_dir = out / "plotdata"
        for t in trends:
            name = f"W_vs_capacity_v{_fmt(t.speed)}_a{_fmt(t.acceleration)}_{t.mode}.csv"
            write_csv(plot_dir / name, header, ("capacity", "W", "motor_id"),
                      zip(t.capacities, t.W, t.motor_ids))
        for (v, a) in cfg.process.cells():
            sel = sorted((c for c in changes if c["speed"] == v and c["acceleration"] == a),
                         key=lambda c: c["capacity"])
            if sel:
                write_csv(plot_dir / f"relative_change_v{_fmt(v)}_a{_fmt(a)}.csv", header,
                          ("capacity", "relative_change", "motor_id"),
                          [(c["capacity"], c["relative_change"], c["motor_id"]) for c in sel])
    failed = [r for r in result.rows if r.error]
    print(f"{len(result.rows)} rows written to {out / 'sweep.csv'}"
          + (f"; {len(failed)} rows with errors" if failed else ""))
    return EXIT_OK


def cmd_validate(args) -> int:
    paths = [Path(args.config)] if args.config else [data_path("default.yaml"), data_path("bench.yaml")]
    reports = []
    for path in paths:
        cfg = load_config(path)
        jl = args.load_inertia if args.load_inertia is not None else cfg.mechanical.load_inertia_kgcm2
        report = validate_catalog(cfg.catalog, jl)
        reports.append({"config": path.name, **report.to_dict()})
        print(f"{path.name}: load inertia {_fmt(jl)} kg*cm^2")
        print(f"  {'id':>4} {'ratio':>10} {'declared':>9} {'capacity':>10} {'declared':>9}  status")
        for r in report.rows:
            print(f"  {r.motor_id:>4} {r.ratio:10.4f} {_opt(r.declared_ratio):>9} "
                  f"{r.capacity:10.4f} {_opt(r.declared_capacity):>9}  {'ok' if r.ok else 'FLAGGED'}")
    if args.json:
        digest = _digest_of([str(p) for p in paths])
        write_json(args.json, _header(None, digest), {"reports": reports})
    return EXIT_OK


def _opt(x) -> str:
    return "-" if x is None else format(x, "g")


# ------------------------------------------------------------------ parser

class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(message)


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="feeddrive", description="Feed drive simulation, servo tuning and motor sweeps.")
    p.add_argument("--version", action="version", version=f"feeddrive {__version__}")
    p.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = p.add_subparsers(dest="command", metavar="COMMAND", parser_class=_Parser)

    sp = sub.add_parser("plan", help="emit a motion profile as CSV")
    sp.add_argument("--distance", type=float, default=200.0, help="stroke, mm")
    sp.add_argument("--speed", type=float, required=True, help="cruise speed, mm/s")
    sp.add_argument("--accel", type=float, required=True, help="acceleration, m/s^2")
    sp.add_argument("--dt", type=float, default=1e-4, help="sample period, s")
    sp.add_argument("--reciprocate", action="store_true", help="forward and back strokes with dwell")
    sp.add_argument("--cycles", type=int, default=1)
    sp.add_argument("--dwell", type=float, default=0.2, help="dwell at each end, s")
    sp.add_argument("-o", "--output", help="CSV path (default stdout)")
    sp.set_defaults(func=cmd_plan)

    def scenario_args(q, process=True):
        q.add_argument("config", help="YAML run configuration")
        q.add_argument("--motor", help="catalog motor id (default: config 'motor')")
        if process:
            q.add_argument("--speed", type=float, help="cruise speed, mm/s")
            q.add_argument("--accel", type=float, help="acceleration, m/s^2")

    sp = sub.add_parser("simulate", help="closed-loop run; trace CSV plus JSON sidecar")
    scenario_args(sp)
    sp.add_argument("--gains", help="kp,kvp,kvi,kfv (overrides config)")
    sp.add_argument("-o", "--output", help="trace CSV path (default stdout)")
    sp.add_argument("--meta", help="sidecar JSON path (default: OUTPUT.json)")
    sp.set_defaults(func=cmd_simulate)

    sp = sub.add_parser("bode", help="open-loop frequency response CSV plus stability JSON")
    scenario_args(sp, process=False)
    sp.add_argument("--gains", help="kp,kvp,kvi,kfv (overrides config)")
    sp.add_argument("-o", "--output", help="CSV path (default stdout)")
    sp.add_argument("--json", help="StabilityReport JSON path")
    sp.set_defaults(func=cmd_bode)

    sp = sub.add_parser("tune", help="tune gains for one motor and process")
    scenario_args(sp)
    sp.add_argument("--algorithm", choices=("fwa", "ga", "both"))
    sp.add_argument("--budget", type=int, help="evaluations per algorithm")
    sp.add_argument("--seed", type=int)
    sp.add_argument("--mode", choices=MODES)
    sp.add_argument("--out-dir")
    sp.set_defaults(func=cmd_tune)

    sp = sub.add_parser("sweep", help="catalog x process sweep")
    sp.add_argument("config", nargs="?", help="YAML run configuration (default: shipped)")
    sp.add_argument("--modes", choices=("both", UNCONSTRAINED, CONSTRAINED))
    sp.add_argument("--budget", type=int)
    sp.add_argument("--seed", type=int, help="master seed")
    sp.add_argument("--workers", type=int)
    sp.add_argument("--protocol", choices=("shared", "independent"))
    sp.add_argument("--out-dir")
    sp.add_argument("--emit-plotdata", action="store_true", help="write per-process series files")
    sp.set_defaults(func=cmd_sweep)

    sp = sub.add_parser("validate", help="check catalog ratio and capacity columns")
    sp.add_argument("config", nargs="?", help="YAML run configuration (default: both shipped)")
    sp.add_argument("--load-inertia", type=float, help="override, kg*cm^2")
    sp.add_argument("--json", help="report JSON path")
    sp.set_defaults(func=cmd_validate)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        if args.command is None:
            parser.print_help(sys.stderr)
            return EXIT_USAGE
        logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                            format="%(name)s: %(message)s", stream=sys.stderr)
        return args.func(args)
    except UsageError as exc:
        print(f"feeddrive: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except BrokenPipeError:
        sys.stdout = open(os.devnull, "w")
        return EXIT_OK
    except DivergenceError as exc:
        print(f"feeddrive: simulation diverged: {exc}", file=sys.stderr)
        return EXIT_DOMAIN
    except (ValueError, OSError) as exc:
        print(f"feeddrive: {exc}", file=sys.stderr)
        return EXIT_DOMAIN


if __name__ == "__main__":
    sys.exit(main())
