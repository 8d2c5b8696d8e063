"""Experiment configuration: YAML file -> validated, fully resolved settings.

A complete annotated example (every key shown at its default)::

    experiment: synth-convergence   # synth-convergence | cube-sfm | cube-sfm-online
                                    # | matrix-completion | load-tracks
    output: results                 # output directory (CLI --out overrides)
    model:
      latent_dim: 5                 # M; data_dim is taken from the generated data
      priors: {a_tau: 1.0e-3, b_tau: 1.0e-3, a_alpha: 1.0e-3, b_alpha: 1.0e-3,
               a_theta: 1.0e-3, b_theta: 1.0e-3}
      learn: {tau: true, alpha: true, theta: true}
      fixed: {tau: 1.0, alpha: 1.0, theta: 1.0}   # used where learn is false
    solver:
      eta: 10.0
      tol: 1.0e-3                   # relative change of the network objective
      max_iter: 200
      consensus_tol: 1.0e-3         # max edge gap relative to parameter scale
      seed: 0                       # seeds data generation and initialization;
                                    # CLI --seed overrides
    network:
      topology: ring                # ring | chain | complete | star
      nodes: 5                      # ignored by the cube experiments (one node per camera)
    data:                           # keys depend on the experiment, see DATA_DEFAULTS
      rows: 50
      samples: 250
      mean: 5.0
      variance: 0.8

Unknown keys anywhere are rejected with a :class:`ConfigurationError` that
names the offending field.
"""
from __future__ import annotations

import copy
import hashlib
import json
from pathlib import Path

import yaml

from .network import TOPOLOGIES, ConfigurationError

EXPERIMENTS = ("synth-convergence", "cube-sfm", "cube-sfm-online", "matrix-completion", "load-tracks")

MODEL_DEFAULTS = {
    "latent_dim": None,
    "priors": {"a_tau": 1e-3, "b_tau": 1e-3, "a_alpha": 1e-3, "b_alpha": 1e-3,
               "a_theta": 1e-3, "b_theta": 1e-3},
    "learn": {"tau": True, "alpha": True, "theta": True},
    "fixed": {"tau": 1.0, "alpha": 1.0, "theta": 1.0},
}
SOLVER_DEFAULTS = {"eta": 10.0, "tol": 1e-3, "max_iter": 200, "consensus_tol": 1e-3, "seed": 0}
NETWORK_DEFAULTS = {"topology": "ring", "nodes": 5}

_MASK = {"kind": "none", "missing_ratio": 0.2, "quantile": 0.5}

DATA_DEFAULTS = {
    "synth-convergence": {"rows": 50, "samples": 250, "mean": 5.0, "variance": 0.8},
    "cube-sfm": {"points": 88, "noise": 0.01, "cameras": 5, "frames": 50,
                 "rotation_step_deg": 3.0, "elevation_deg": 30.0, "mask": _MASK},
    "cube-sfm-online": {"points": 88, "noise": 0.01, "cameras": 5, "frames": 50,
                        "rotation_step_deg": 3.0, "elevation_deg": 30.0,
                        "initial_frames": 10, "increment": 5},
    "matrix-completion": {"rows": 200, "samples": 1000, "rank": 12, "noise": 0.1,
                          "observed_fraction": 0.2, "probe_fraction": 0.1},
    "load-tracks": {"path": None, "camera_frames": None},
}
LATENT_DEFAULTS = {"synth-convergence": 5, "cube-sfm": 3, "cube-sfm-online": 3,
                   "matrix-completion": 12, "load-tracks": 3}

TOP_LEVEL = ("experiment", "output", "model", "solver", "network", "data")


def _merge(defaults: dict, given, where: str) -> dict:
    if given is None:
        given = {}
    if not isinstance(given, dict):
        raise ConfigurationError(f"{where} must be a mapping")
    out = copy.deepcopy(defaults)
    for key, value in given.items():
        if key not in defaults:
            raise ConfigurationError(f"unknown key {where}.{key}")
        if isinstance(defaults[key], dict):
            out[key] = _merge(defaults[key], value, f"{where}.{key}")
        else:
            out[key] = value
    return out


def _positive(cfg: dict, section: str, *names) -> None:
    for n in names:
        v = cfg[section][n]
        if isinstance(v, bool) or not isinstance(v, (int, float)) or not v > 0:
            raise ConfigurationError(f"{section}.{n} must be a positive number, got {v!r}")


def _positive_int(cfg: dict, section: str, *names) -> None:
    for n in names:
        v = cfg[section][n]
        if isinstance(v, bool) or not isinstance(v, int) or v < 1:
            raise ConfigurationError(f"{section}.{n} must be a positive integer, got {v!r}")


def resolve(raw: dict, base_dir: Path | None = None) -> dict:
    """Fill defaults and validate a parsed config mapping."""
    if not isinstance(raw, dict):
        raise ConfigurationError("config must be a mapping at top level")
    for key in raw:
        if key not in TOP_LEVEL:
            raise ConfigurationError(f"unknown key {key}")
    exp = raw.get("experiment")
    if exp not in EXPERIMENTS:
        raise ConfigurationError(f"experiment must be one of {EXPERIMENTS}, got {exp!r}")
    cfg = {
        "experiment": exp,
        "output": str(raw.get("output", "results")),
        "model": _merge(MODEL_DEFAULTS, raw.get("model"), "model"),
        "solver": _merge(SOLVER_DEFAULTS, raw.get("solver"), "solver"),
        "network": _merge(NETWORK_DEFAULTS, raw.get("network"), "network"),
        "data": _merge(DATA_DEFAULTS[exp], raw.get("data"), "data"),
    }
    if cfg["model"]["latent_dim"] is None:
        cfg["model"]["latent_dim"] = LATENT_DEFAULTS[exp]
    _positive_int(cfg, "model", "latent_dim")
    for block in ("priors", "fixed"):
        for k, v in cfg["model"][block].items():
            if isinstance(v, bool) or not isinstance(v, (int, float)) or not v > 0:
                raise ConfigurationError(f"model.{block}.{k} must be a positive number, got {v!r}")
    for k, v in cfg["model"]["learn"].items():
        if not isinstance(v, bool):
            raise ConfigurationError(f"model.learn.{k} must be true or false")
    _positive(cfg, "solver", "eta", "tol", "consensus_tol")
    _positive_int(cfg, "solver", "max_iter")
    if isinstance(cfg["solver"]["seed"], bool) or not isinstance(cfg["solver"]["seed"], int):
        raise ConfigurationError("solver.seed must be an integer")
    if cfg["network"]["topology"] not in TOPOLOGIES:
        raise ConfigurationError(f"network.topology must be one of {TOPOLOGIES}, "
                                 f"got {cfg['network']['topology']!r}")
    _positive_int(cfg, "network", "nodes")
    _check_data(cfg, base_dir)
    return cfg


def _check_data(cfg: dict, base_dir: Path | None) -> None:
    exp, data = cfg["experiment"], cfg["data"]
    if exp == "synth-convergence":
        _positive_int(cfg, "data", "rows", "samples")
        _positive(cfg, "data", "variance")
    elif exp in ("cube-sfm", "cube-sfm-online"):
        _positive_int(cfg, "data", "points", "cameras", "frames")
        if not data["noise"] >= 0:
            raise ConfigurationError("data.noise must be non-negative")
        if exp == "cube-sfm":
            mask = data["mask"]
            if mask["kind"] not in ("none", "mar", "mnar_occlusion", "mnar_threshold"):
                raise ConfigurationError(f"data.mask.kind must be none, mar, mnar_occlusion or "
                                         f"mnar_threshold, got {mask['kind']!r}")
            if not 0.0 <= mask["missing_ratio"] < 1.0:
                raise ConfigurationError("data.mask.missing_ratio must lie in [0, 1)")
            if not 0.0 < mask["quantile"] < 1.0:
                raise ConfigurationError("data.mask.quantile must lie in (0, 1)")
        else:
            _positive_int(cfg, "data", "initial_frames", "increment")
            if data["initial_frames"] > data["frames"]:
                raise ConfigurationError("data.initial_frames exceeds data.frames")
    elif exp == "matrix-completion":
        _positive_int(cfg, "data", "rows", "samples", "rank")
        for k in ("observed_fraction", "probe_fraction"):
            if not 0.0 < data[k] < 1.0:
                raise ConfigurationError(f"data.{k} must lie in (0, 1)")
    elif exp == "load-tracks":
        if not data["path"]:
            raise ConfigurationError("data.path is required for load-tracks")
        path = Path(data["path"])
        if not path.is_absolute() and base_dir is not None:
            path = base_dir / path
        if not path.is_file():
            raise ConfigurationError(f"data.path: file not found: {data['path']}")
        data["path"] = str(path)
        cf = data["camera_frames"]
        if cf is not None and (not isinstance(cf, list) or any(not isinstance(c, int) or c < 1 for c in cf)):
            raise ConfigurationError("data.camera_frames must be a list of positive integers")


def load_config(path) -> dict:
    """Parse and resolve a YAML config file."""
    path = Path(path)
    try:
        text = path.read_text()
    except FileNotFoundError:
        raise ConfigurationError(f"config file not found: {path}") from None
    try:
        raw = yaml.safe_load(text)
    except yaml.YAMLError as e:
        raise ConfigurationError(f"config is not valid YAML: {e}") from None
    return resolve(raw, path.parent)


def set_param(cfg: dict, name: str, value) -> dict:
    """Copy of ``cfg`` with the dotted parameter ``name`` (e.g. ``solver.eta``) set."""
    parts = name.split(".")
    out = copy.deepcopy(cfg)
    node = out
    for p in parts[:-1]:
        if not isinstance(node, dict) or p not in node:
            raise ConfigurationError(f"unknown parameter {name}")
        node = node[p]
    if not isinstance(node, dict) or parts[-1] not in node:
        raise ConfigurationError(f"unknown parameter {name}")
    node[parts[-1]] = value
    return out


def config_hash(cfg: dict) -> str:
    """SHA-256 of the canonical JSON form of a resolved config."""
    blob = json.dumps(cfg, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(blob.encode()).hexdigest()
