"""Experiment pipelines driven by a resolved config (see :mod:`dmfvi.config`).

Each runner returns ``(results, trace)``: a JSON-ready dict of final metrics
and the distributed solver's :class:`~dmfvi.trace.ConvergenceTrace`.  All
randomness derives from ``solver.seed``.
"""
from __future__ import annotations

import numpy as np

from . import badmm, bpca, missing
from . import benchmarks as bm
from .network import build_topology, partition_blocks, partition_equal


def model_config(cfg: dict, data_dim: int) -> bpca.BpcaModelConfig:
    m = cfg["model"]
    return bpca.BpcaModelConfig(
        data_dim, m["latent_dim"],
        learn_tau=m["learn"]["tau"], learn_alpha=m["learn"]["alpha"], learn_theta=m["learn"]["theta"],
        **m["fixed"], **m["priors"])


def solver_config(cfg: dict) -> badmm.SolverConfig:
    return badmm.SolverConfig(**cfg["solver"])


def _central(data, mask, model, cfg):
    s = cfg["solver"]
    return bpca.fit_centralized(data, mask, model, init_seed=s["seed"], tol=s["tol"], max_iter=s["max_iter"])


def _summary(fit: badmm.DistributedFit) -> dict:
    return {"objective": fit.trace.final_objective, "iterations": fit.trace.iterations,
            "converged": fit.trace.converged, "max_edge_gap": fit.trace.rows[-1].max_edge_gap}


def run_synth_convergence(cfg: dict):
    d, seed = cfg["data"], cfg["solver"]["seed"]
    rng = np.random.default_rng(seed)
    X = rng.normal(d["mean"], np.sqrt(d["variance"]), size=(d["rows"], d["samples"]))
    model = model_config(cfg, d["rows"])
    graph = build_topology(cfg["network"]["topology"], cfg["network"]["nodes"])
    fit = badmm.fit_distributed(X, None, graph, partition_equal(X.shape[1], graph), model, solver_config(cfg))
    _, ctrace = _central(X, None, model, cfg)
    res = _summary(fit)
    res.update(central_objective=ctrace.final_objective, central_iterations=ctrace.iterations,
               metric=abs(res["objective"] - ctrace.final_objective) / abs(ctrace.final_objective))
    return res, fit.trace


def cube_scene(cfg: dict) -> bm.CubeScene:
    d = cfg["data"]
    return bm.generate_cube_sequence(d["points"], d["noise"], cfg["solver"]["seed"], camera_count=d["cameras"],
                                     frames_per_camera=d["frames"], rotation_step_deg=d["rotation_step_deg"],
                                     elevation_deg=d["elevation_deg"])


def cube_mask(cfg: dict, scene: bm.CubeScene, values):
    spec = cfg["data"]["mask"]
    kind, seed = spec["kind"], cfg["solver"]["seed"]
    if kind == "none":
        return None
    if kind == "mar":
        return missing.generate_mar_mask(*values.shape, spec["missing_ratio"], seed)
    if kind == "mnar_threshold":
        return missing.generate_mnar_threshold_mask(values, spec["quantile"], seed)
    return missing.generate_mnar_occlusion_mask(scene)


def run_cube_sfm(cfg: dict):
    scene = cube_scene(cfg)
    mm = bm.assemble_measurement(scene)
    mask = cube_mask(cfg, scene, mm.values)
    model = model_config(cfg, scene.point_count)
    graph = build_topology(cfg["network"]["topology"], scene.camera_count)
    fit = badmm.fit_distributed(mm.values, mask, graph, mm.partition, model, solver_config(cfg))
    cpost, ctrace = _central(mm.values, mask, model, cfg)
    res = _summary(fit)
    res.update(angle=bm.max_subspace_angle(fit.global_means()[1], scene.points3d),
               central_angle=bm.max_subspace_angle(cpost.w_mean, scene.points3d),
               central_objective=ctrace.final_objective,
               observed_fraction=1.0 if mask is None else float(mask.mean()))
    if mask is None:
        res["svd_angle"] = bm.max_subspace_angle(bm.svd_baseline(mm), scene.points3d)
    res["metric"] = res["angle"]
    return res, fit.trace


def run_cube_sfm_online(cfg: dict):
    d = cfg["data"]
    scene = cube_scene(cfg)
    schedule = bm.online_schedule(d["frames"], d["initial_frames"], d["increment"])
    model = model_config(cfg, scene.point_count)
    graph = build_topology(cfg["network"]["topology"], scene.camera_count)
    steps, fit = bm.run_online_dbpca(scene, schedule, model, solver_config(cfg), graph)
    mm = bm.assemble_measurement(scene)
    cpost, _ = _central(mm.values, None, model, cfg)
    res = _summary(fit)
    res.update(steps=[{"frames": s.frames, "angle": s.angle, "iterations": s.iterations,
                       "converged": s.converged} for s in steps],
               angle=steps[-1].angle,
               central_angle=bm.max_subspace_angle(cpost.w_mean, scene.points3d))
    res["metric"] = res["angle"]
    return res, fit.trace


def run_matrix_completion(cfg: dict):
    d = cfg["data"]
    r = bm.generate_lowrank_ratings(d["rows"], d["samples"], d["rank"], d["noise"], d["observed_fraction"],
                                    cfg["solver"]["seed"], d["probe_fraction"])
    model = model_config(cfg, d["rows"])
    graph = build_topology(cfg["network"]["topology"], cfg["network"]["nodes"])
    part = partition_equal(d["samples"], graph)
    fit = badmm.fit_distributed(r.data, r.train_mask, graph, part, model, solver_config(cfg))
    cpost, ctrace = _central(r.data, r.train_mask, model, cfg)
    res = _summary(fit)
    res.update(probe_rmse=missing.reconstruction_rmse(r.data, r.probe_mask, fit.reconstruct(d["samples"])),
               central_probe_rmse=missing.reconstruction_rmse(r.data, r.probe_mask, cpost),
               baseline_probe_rmse=missing.reconstruction_rmse(
                   r.data, r.probe_mask, bm.column_mean_baseline(r.data, r.train_mask)),
               central_objective=ctrace.final_objective)
    res["metric"] = res["probe_rmse"]
    return res, fit.trace


def run_load_tracks(cfg: dict):
    d = cfg["data"]
    values, mask = bm.load_point_tracks(d["path"])
    if d["camera_frames"] is not None:
        part = partition_blocks([2 * f for f in d["camera_frames"]])
        nodes = len(d["camera_frames"])
    else:
        nodes = cfg["network"]["nodes"]
        part = None
    graph = build_topology(cfg["network"]["topology"], nodes)
    part = partition_equal(values.shape[1], graph) if part is None else part
    model = model_config(cfg, values.shape[0])
    fit = badmm.fit_distributed(values, mask, graph, part, model, solver_config(cfg))
    res = _summary(fit)
    res.update(observed_fraction=float(mask.mean()),
               metric=missing.reconstruction_rmse(np.nan_to_num(values), mask, fit.reconstruct(values.shape[1])))
    return res, fit.trace


RUNNERS = {
    "synth-convergence": run_synth_convergence,
    "cube-sfm": run_cube_sfm,
    "cube-sfm-online": run_cube_sfm_online,
    "matrix-completion": run_matrix_completion,
    "load-tracks": run_load_tracks,
}


def run_experiment(cfg: dict):
    """Dispatch on ``cfg['experiment']``; returns ``(results, trace)``."""
    return RUNNERS[cfg["experiment"]](cfg)
