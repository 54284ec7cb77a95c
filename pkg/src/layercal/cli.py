"""Command line entry point: ``layercal <subcommand> --config run.json``."""
from __future__ import annotations

import argparse
import json
import os
import sys
import time

import numpy as np

from . import config as cfgmod
from .adjoint import Objective, gradient_check
from .calibrate import baseline_energy, calibration_times, run_calibration, steps_for, sweep_constant
from .energy import reduction_db
from .io import dumps, fmt, write_csv, write_json
from .model import ConfigError
from .optimize import OptimizerError
from .solver import DivergenceError, Simulation, write_energy_csv

EXIT_OK, EXIT_CONFIG, EXIT_DIVERGENCE, EXIT_OPTIMIZER = 0, 2, 3, 4


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="layercal", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)
    for name, help_ in [
        ("simulate", "forward run, writes energy.csv"),
        ("calibrate", "optimise the attenuation controls, writes result.json and history.csv"),
        ("sweep", "brute-force table for a single constant control, writes sweep.csv"),
        ("gradcheck", "adjoint gradient against finite differences, writes gradient.json"),
        ("report", "recompute the energy reduction of a stored calibration"),
    ]:
        p = sub.add_parser(name, help=help_)
        p.add_argument("--config", required=True, help="JSON configuration file")
        p.add_argument("--out", default=".", help="output directory")
        p.add_argument("--seed", type=int, default=0)
        p.add_argument("--set", dest="overrides", action="append", default=[], metavar="KEY=VALUE")
        p.add_argument("--threads", type=int, default=1)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        rc = cfgmod.load(args.config, args.overrides)
        os.makedirs(args.out, exist_ok=True)
        return COMMANDS[args.command](rc, args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except DivergenceError as exc:
        print(f"divergence: {exc}", file=sys.stderr)
        return EXIT_DIVERGENCE
    except OptimizerError as exc:
        print(f"optimizer failure: {exc}", file=sys.stderr)
        return EXIT_OPTIMIZER


def _timing(args, name, seconds):
    write_json(os.path.join(args.out, "timing.json"), {"command": name, "seconds": seconds})


def cmd_simulate(rc, args) -> int:
    start = time.perf_counter()
    sim = Simulation(rc.sim)
    sigma = None
    if rc.profile is not None and rc.sim.layers != "none":
        sigma = Objective(sim, rc.profile).sigma(rc.profile.values)
    traj = sim.run(sigma)
    write_energy_csv(traj, os.path.join(args.out, "energy.csv"))
    _timing(args, "simulate", time.perf_counter() - start)
    return EXIT_OK


def cmd_calibrate(rc, args) -> int:
    res = run_calibration(rc.calibration(seed=args.seed, threads=args.threads))
    doc = res.as_dict()
    doc["config"] = cfgmod.emit(rc)
    doc["seed"] = args.seed
    write_json(os.path.join(args.out, "result.json"), doc)
    m = len(res.controls)
    header = ["iter", "J", "delta_db", "proj_grad_inf"] + [f"c_{k}" for k in range(m)]
    write_csv(os.path.join(args.out, "history.csv"), header, res.history_rows())
    _timing(args, "calibrate", res.wall_clock)
    if res.optimizer.reason == "failed":
        return EXIT_OPTIMIZER
    return EXIT_OK


def cmd_sweep(rc, args) -> int:
    start = time.perf_counter()
    lo, hi, count = rc.sweep if rc.sweep is not None else (0.0, 20000.0, 200)
    rows = sweep_constant(rc.calibration(seed=args.seed), np.linspace(lo, hi, count))
    write_csv(os.path.join(args.out, "sweep.csv"), ["c", "J", "delta_db"], rows)
    _timing(args, "sweep", time.perf_counter() - start)
    return EXIT_OK


def cmd_gradcheck(rc, args) -> int:
    start = time.perf_counter()
    if rc.profile is None:
        raise ConfigError("attenuation: section required for gradcheck")
    sim = Simulation(rc.sim)
    rep = gradient_check(Objective(sim, rc.profile), rc.profile.values, threads=args.threads)
    write_json(os.path.join(args.out, "gradient.json"), rep.as_dict())
    _timing(args, "gradcheck", time.perf_counter() - start)
    return EXIT_OK


def cmd_report(rc, args) -> int:
    path = os.path.join(args.out, "result.json")
    try:
        with open(path) as fh:
            stored = json.load(fh)
    except FileNotFoundError:
        raise ConfigError(f"report: {path} not found, run calibrate first") from None
    cal = rc.calibration(seed=args.seed)
    t_c, t_e = calibration_times(cal)
    u = np.asarray(stored["controls"], dtype=float)
    out = {}
    for tag, t in (("t_c", t_c), ("t_e", t_e)):
        steps = steps_for(t, rc.sim.time.dt)
        sim = Simulation(rc.sim.with_steps(steps))
        E = Objective(sim, rc.profile).value(u)
        Ebar = baseline_energy(rc.sim, steps)
        out[tag] = {"time": t, "energy": E, "baseline": Ebar, "delta_db": reduction_db(E, Ebar)}
    out["stored_delta_db"] = stored["delta_db"]
    out["difference_db"] = out["t_c"]["delta_db"] - stored["delta_db"]
    write_json(os.path.join(args.out, "report.json"), out)
    return EXIT_OK


COMMANDS = {
    "simulate": cmd_simulate,
    "calibrate": cmd_calibrate,
    "sweep": cmd_sweep,
    "gradcheck": cmd_gradcheck,
    "report": cmd_report,
}

if __name__ == "__main__":
    sys.exit(main())
