"""Command-line runner.

``dmfvi run CONFIG [--out DIR] [--seed S]`` writes ``trace.csv``,
``results.json`` and ``config-echo.json`` into the output directory.

``dmfvi sweep CONFIG --param solver.eta --values 1,10,100 [--seeds 0,1,2]
[--parallel N]`` runs every (value, seed) pair and writes ``sweep.csv`` with
columns ``value, seed, final_objective, iterations, converged, metric``.

Exit codes: 0 success, 2 configuration error, 3 solver divergence, 4 I/O
error.  On failure a JSON error record is printed to stderr and, when the
output directory is writable, saved as ``error.json``.
"""
from __future__ import annotations

import argparse
import csv
import json
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import yaml

from .benchmarks import DegenerateInputError
from .bpca import DivergenceError
from .config import config_hash, load_config, resolve, set_param
from .experiments import run_experiment
from .network import ConfigurationError

EXIT_CONFIG, EXIT_DIVERGENCE, EXIT_IO = 2, 3, 4
SWEEP_COLUMNS = ("value", "seed", "final_objective", "iterations", "converged", "metric")


def _dump_json(obj, path: Path) -> None:
    path.write_text(json.dumps(obj, sort_keys=True, indent=2) + "\n")


def run_command(cfg: dict, out: Path) -> dict:
    h = config_hash(cfg)
    results, trace = run_experiment(cfg)
    out.mkdir(parents=True, exist_ok=True)
    trace.to_csv(out / "trace.csv", config_hash=h)
    _dump_json({"config_hash": h, "experiment": cfg["experiment"], "seed": cfg["solver"]["seed"],
                "results": results}, out / "results.json")
    _dump_json({"config_hash": h, "config": cfg}, out / "config-echo.json")
    return results


def _parse_list(text: str) -> list:
    return [yaml.safe_load(item.strip()) for item in text.split(",") if item.strip()]


def _sweep_one(args):
    cfg, value, seed = args
    results, trace = run_experiment(cfg)
    return [value, seed, trace.final_objective, trace.iterations, trace.converged, results["metric"]]


def sweep_command(cfg: dict, param: str, values: list, seeds: list, out: Path, parallel: int = 1) -> list:
    jobs = []
    for value in values:
        varied = set_param(cfg, param, value)
        for seed in seeds:
            run_cfg = resolve(set_param(varied, "solver.seed", seed))
            jobs.append((run_cfg, value, seed))
    if parallel > 1:
        with ProcessPoolExecutor(max_workers=parallel) as pool:
            rows = list(pool.map(_sweep_one, jobs))
    else:
        rows = [_sweep_one(j) for j in jobs]
    out.mkdir(parents=True, exist_ok=True)
    with open(out / "sweep.csv", "w", newline="") as fh:
        fh.write(f"# config_hash: {config_hash(cfg)}\n")
        fh.write(f"# param: {param}\n")
        w = csv.writer(fh)
        w.writerow(SWEEP_COLUMNS)
        for r in rows:
            w.writerow([r[0], r[1], repr(r[2]), r[3], r[4], repr(r[5])])
    return rows


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="dmfvi", description="Distributed mean-field VI for Bayesian PCA.")
    sub = p.add_subparsers(dest="command", required=True)
    for name in ("run", "sweep"):
        s = sub.add_parser(name)
        s.add_argument("config")
        s.add_argument("--out", help="output directory (default: the config's output key)")
        s.add_argument("--seed", type=int, help="override solver.seed")
        if name == "sweep":
            s.add_argument("--param", required=True, help="dotted parameter name, e.g. solver.eta")
            s.add_argument("--values", required=True, help="comma-separated values")
            s.add_argument("--seeds", help="comma-separated seeds (default: the config seed)")
            s.add_argument("--parallel", type=int, default=1, help="worker processes")
    return p


def _fail(code: int, kind: str, err: Exception, out: Path | None) -> int:
    record = {"error": kind, "exit_code": code, "message": str(err)}
    print(json.dumps(record, sort_keys=True), file=sys.stderr)
    if out is not None:
        try:
            out.mkdir(parents=True, exist_ok=True)
            _dump_json(record, out / "error.json")
        except OSError:
            pass
    return code


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    out = Path(args.out) if args.out else None
    try:
        cfg = load_config(args.config)
        if args.seed is not None:
            cfg = resolve(set_param(cfg, "solver.seed", args.seed))
        out = out or Path(cfg["output"])
        if args.command == "run":
            run_command(cfg, out)
        else:
            values = _parse_list(args.values)
            seeds = _parse_list(args.seeds) if args.seeds else [cfg["solver"]["seed"]]
            if not values:
                raise ConfigurationError("--values is empty")
            if any(isinstance(s, bool) or not isinstance(s, int) for s in seeds):
                raise ConfigurationError("--seeds must be integers")
            sweep_command(cfg, args.param, values, seeds, out, args.parallel)
    except (ConfigurationError, DegenerateInputError) as e:
        return _fail(EXIT_CONFIG, "configuration", e, out)
    except DivergenceError as e:
        return _fail(EXIT_DIVERGENCE, "divergence", e, out)
    except OSError as e:
        return _fail(EXIT_IO, "io", e, out)
    return 0


if __name__ == "__main__":
    sys.exit(main())
