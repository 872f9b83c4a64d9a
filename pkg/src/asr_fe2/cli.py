"""Command line entry point ``asr-fe2``."""
from __future__ import annotations

import argparse
import csv
import logging
import sys
from pathlib import Path

from .config import load_config
from .errors import (NonConvergenceError, ParameterError, PlacementError, SingularityError,
                     StiffnessError)
from .output import HISTORY_HEADER, write_history, write_vtk
from .scenarios import Vary, monte_carlo, run_fe2_scenario, run_meso_scenario

EXIT_OK = 0
EXIT_PARAMETER = 2
EXIT_SOLVER = 3

log = logging.getLogger("asr_fe2")


def _parser():
    p = argparse.ArgumentParser(prog="asr-fe2", description="ASR damage simulations of concrete")
    p.add_argument("-v", "--verbose", action="count", default=0)
    sub = p.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run one scenario")
    run.add_argument("--config", required=True, type=Path)
    run.add_argument("--seed-geometry", type=int)
    run.add_argument("--seed-strength", type=int)
    run.add_argument("--seed-sites", type=int)
    run.add_argument("--out", type=Path, help="output directory (overrides output_dir)")
    run.add_argument("--profile", choices=("desk", "paper"),
                     help="fill keys missing from the config file from a built-in profile")
    run.add_argument("--checkpoint", action="store_true",
                     help="write a checkpoint per time step (FE2 scenarios)")

    mc = sub.add_parser("montecarlo", help="Monte Carlo sweep over seeds")
    mc.add_argument("--config", required=True, type=Path)
    mc.add_argument("--runs", required=True, type=int)
    mc.add_argument("--vary", required=True, choices=("sites", "geometry"))
    mc.add_argument("--out", type=Path)
    mc.add_argument("--profile", choices=("desk", "paper"))
    mc.add_argument("--workers", type=int, help="parallel runs (overrides n_workers)")
    return p


def _seed_overrides(args):
    out = {}
    for key in ("seed_geometry", "seed_strength", "seed_sites"):
        value = getattr(args, key, None)
        if value is not None:
            out[key] = str(value)
    return out


def _out_dir(args, config):
    out = args.out if args.out is not None else Path(config.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    return out


def cmd_run(args):
    config = load_config(args.config, args.profile, _seed_overrides(args))
    out = _out_dir(args, config)
    if config.scenario.startswith("meso"):
        result = run_meso_scenario(config)
    else:
        ckpt = None
        if args.checkpoint:
            ckpt = out / "checkpoints"
            ckpt.mkdir(exist_ok=True)
        result = run_fe2_scenario(config, checkpoint_dir=ckpt)
    write_history(out / "history.csv", result.history)
    for i, f in enumerate(result.fields):
        name = "fields.vtk" if len(result.fields) == 1 else f"rve_{i:03d}.vtk"
        write_vtk(out / name, f.mesh, f.vtk_data())
    log.info("wrote %d records to %s", len(result.history), out)
    return EXIT_OK


def cmd_montecarlo(args):
    config = load_config(args.config, args.profile)
    out = _out_dir(args, config)
    result = monte_carlo(config, args.runs, Vary(args.vary), n_workers=args.workers)
    with (out / "runs.csv").open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(("run", "seed_geometry", "seed_strength", "seed_sites") + HISTORY_HEADER
                   + ("error",))
        for i, run in enumerate(result.runs):
            for rec in run.history or []:
                w.writerow((i, *run.seeds, *(repr(v) for v in vars(rec).values()), ""))
            if run.history is None:
                w.writerow((i, *run.seeds, *[""] * len(HISTORY_HEADER), run.error))
    with (out / "stats.csv").open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(tuple(f"{h}_mean" for h in HISTORY_HEADER)
                   + tuple(f"{h}_std" for h in HISTORY_HEADER))
        for m, s in zip(result.mean, result.std):
            w.writerow([repr(float(v)) for v in (*m, *s)])
    log.info("%d runs, %d failed", len(result.runs), result.n_failed)
    return EXIT_OK


def main(argv=None):
    args = _parser().parse_args(argv)
    level = logging.WARNING - 10 * min(args.verbose, 2)
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s")
    try:
        if args.command == "run":
            return cmd_run(args)
        return cmd_montecarlo(args)
    except (ParameterError, PlacementError) as err:
        print(f"asr-fe2: parameter error: {err}", file=sys.stderr)
        return EXIT_PARAMETER
    except (NonConvergenceError, SingularityError, StiffnessError) as err:
        print(f"asr-fe2: solver failure: {err}", file=sys.stderr)
        details = getattr(err, "diagnostics", None)
        if details:
            print(f"asr-fe2: diagnostics: {details}", file=sys.stderr)
        return EXIT_SOLVER


if __name__ == "__main__":
    sys.exit(main())
