"""Benchmark generators and metrics.

* A rotating-cube affine structure-from-motion scene observed by several
  orthographic cameras, its measurement matrix, the rank-3 SVD baseline and
  the maximum subspace angle metric.
* Online (minibatch) distributed fitting on growing frame sets.
* Synthetic low-rank rating matrices for matrix completion.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from itertools import product

import numpy as np
from scipy.linalg import subspace_angles

from . import badmm, bpca
from .network import ConfigurationError, NetworkGraph, build_topology, partition_blocks


class DegenerateInputError(ValueError):
    """Input matrix lacks the rank an operation needs."""


# ---------------------------------------------------------------- cube scene

_FACE_NORMALS = np.array([[s * (k == a) for a in range(3)] for k in range(3) for s in (-1, 1)], dtype=float)
# face f = 2 * axis + (sign > 0); normal _FACE_NORMALS[f]


def _rot_z(deg: float) -> np.ndarray:
    t = np.deg2rad(deg)
    c, s = np.cos(t), np.sin(t)
    return np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])


@dataclass
class CubeScene:
    points3d: np.ndarray          # P x 3, centred
    faces: np.ndarray             # P x 6 bool, faces each point lies on
    camera_count: int
    frames_per_camera: int
    rotation_step_deg: float
    elevation_deg: float
    noise_sigma: float
    observations: np.ndarray = field(repr=False)   # cameras x frames x P x 2

    @property
    def point_count(self) -> int:
        return self.points3d.shape[0]

    def rotation(self, frame: int) -> np.ndarray:
        """Cube rotation at ``frame``: clockwise about the vertical axis."""
        return _rot_z(-self.rotation_step_deg * frame)

    def camera_basis(self, camera: int) -> np.ndarray:
        """Rows ``(right, up, toward_camera)`` of camera ``camera``."""
        az = np.deg2rad(360.0 * camera / self.camera_count)
        el = np.deg2rad(self.elevation_deg)
        back = np.array([np.cos(el) * np.cos(az), np.cos(el) * np.sin(az), np.sin(el)])
        right = np.array([-np.sin(az), np.cos(az), 0.0])
        return np.stack([right, np.cross(back, right), back])

    def project(self, camera: int, frame: int) -> np.ndarray:
        """Noise-free orthographic projection, P x 2."""
        basis = self.camera_basis(camera)
        return self.points3d @ self.rotation(frame).T @ basis[:2].T

    def visibility(self) -> np.ndarray:
        """cameras x frames x P bool; a point is visible if any of its faces looks at the camera."""
        vis = np.zeros((self.camera_count, self.frames_per_camera, self.point_count), dtype=bool)
        for c, f in product(range(self.camera_count), range(self.frames_per_camera)):
            normals = _FACE_NORMALS @ self.rotation(f).T
            front = normals @ self.camera_basis(c)[2] > 0
            vis[c, f] = (self.faces & front[None, :]).any(axis=1)
        return vis


def generate_cube_sequence(points_per_cube: int = 88, noise_sigma: float = 0.0, seed: int = 0,
                           camera_count: int = 5, frames_per_camera: int = 50,
                           rotation_step_deg: float = 3.0, elevation_deg: float = 30.0) -> CubeScene:
    """Unit cube (8 vertices plus uniform edge samples) seen by ``camera_count`` cameras.

    Cameras sit at equally spaced azimuths and a fixed elevation, all looking
    at the cube centre.  The cube turns ``rotation_step_deg`` per frame.
    Pixel noise is i.i.d. Gaussian with standard deviation ``noise_sigma``
    (the cube has unit side, so sigma is relative to cube scale).
    """
    if points_per_cube < 8:
        raise ConfigurationError("points_per_cube must be at least 8")
    if camera_count < 1 or frames_per_camera < 1:
        raise ConfigurationError("need at least one camera and one frame")
    rng = np.random.default_rng(seed)
    verts = np.array(list(product((-0.5, 0.5), repeat=3)))
    edges = [(a, b) for a in range(8) for b in range(a + 1, 8) if np.sum(verts[a] != verts[b]) == 1]
    extra = points_per_cube - 8
    which = rng.integers(len(edges), size=extra)
    t = rng.uniform(0.0, 1.0, size=extra)
    ends = np.array(edges)[which]
    pts = np.vstack([verts, verts[ends[:, 0]] + t[:, None] * (verts[ends[:, 1]] - verts[ends[:, 0]])])
    faces = np.zeros((points_per_cube, 6), dtype=bool)
    for axis in range(3):
        faces[:, 2 * axis] = np.isclose(pts[:, axis], -0.5)
        faces[:, 2 * axis + 1] = np.isclose(pts[:, axis], 0.5)
    pts = pts - pts.mean(axis=0)
    scene = CubeScene(pts, faces, camera_count, frames_per_camera, rotation_step_deg, elevation_deg,
                      noise_sigma, np.empty((camera_count, frames_per_camera, points_per_cube, 2)))
    for c, f in product(range(camera_count), range(frames_per_camera)):
        scene.observations[c, f] = scene.project(c, f)
    if noise_sigma > 0:
        scene.observations += rng.normal(0.0, noise_sigma, size=scene.observations.shape)
    return scene


# ---------------------------------------------------------------- measurement matrix

@dataclass
class MeasurementMatrix:
    values: np.ndarray       # P x 2F
    provenance: list         # column -> (camera, frame, axis)
    blocks: list             # per-camera column indices

    @property
    def partition(self):
        return partition_blocks([len(b) for b in self.blocks])


def assemble_measurement(scene: CubeScene, frames: int | None = None) -> MeasurementMatrix:
    """Stack the first ``frames`` frames of every camera into a points x (2 frames) matrix.

    Columns are grouped by camera; within a camera, frame by frame with x
    then y.
    """
    F = scene.frames_per_camera if frames is None else frames
    if not 1 <= F <= scene.frames_per_camera:
        raise ConfigurationError(f"frames must lie in [1, {scene.frames_per_camera}]")
    obs = scene.observations[:, :F]                         # C x F x P x 2
    values = obs.transpose(2, 0, 1, 3).reshape(scene.point_count, -1)
    provenance = [(c, f, a) for c in range(scene.camera_count) for f in range(F) for a in range(2)]
    blocks = [list(range(c * 2 * F, (c + 1) * 2 * F)) for c in range(scene.camera_count)]
    return MeasurementMatrix(values, provenance, blocks)


def svd_baseline(measurement, rank: int = 3) -> np.ndarray:
    """Rank-``rank`` factorization of the column-centred matrix; returns ``U S`` (P x rank)."""
    X = np.asarray(getattr(measurement, "values", measurement), dtype=float)
    if not np.all(np.isfinite(X)):
        raise ConfigurationError("the SVD baseline needs a complete measurement matrix")
    X = X - X.mean(axis=0, keepdims=True)
    U, s, _ = np.linalg.svd(X, full_matrices=False)
    if s.size < rank or s[rank - 1] <= 1e-12 * max(s[0], 1e-300):
        raise DegenerateInputError(f"measurement has fewer than {rank} nonzero singular values")
    return U[:, :rank] * s[:rank]


def max_subspace_angle(A, B) -> float:
    """Largest principal angle between the column spaces of A and B, in degrees."""
    A = np.asarray(A, dtype=float)
    B = np.asarray(B, dtype=float)
    if A.ndim != 2 or B.ndim != 2 or A.shape[0] != B.shape[0]:
        raise ValueError("A and B must be matrices with the same number of rows")
    for name, X in (("A", A), ("B", B)):
        if np.linalg.matrix_rank(X) < X.shape[1]:
            raise DegenerateInputError(f"{name} does not have full column rank")
    return float(np.rad2deg(np.max(subspace_angles(A, B))))


# ---------------------------------------------------------------- online fitting

def online_schedule(frames_per_camera: int, initial_frames: int = 10, increment: int = 5) -> list:
    """Frame counts exposed per camera at each step: initial, initial + increment, ..., all."""
    if initial_frames < 1 or increment < 1:
        raise ConfigurationError("initial_frames and increment must be positive")
    if frames_per_camera < initial_frames:
        raise ConfigurationError("frames_per_camera must be at least initial_frames")
    steps = list(range(initial_frames, frames_per_camera + 1, increment))
    if steps[-1] != frames_per_camera:
        steps.append(frames_per_camera)
    return steps


def schedule_columns(scene: CubeScene, frames: int) -> list:
    """Per-camera column indices (in the full measurement matrix) exposed at ``frames``."""
    F = scene.frames_per_camera
    return [list(range(c * 2 * F, c * 2 * F + 2 * frames)) for c in range(scene.camera_count)]


@dataclass
class OnlineStep:
    frames: int
    angle: float
    iterations: int
    converged: bool


def _extend_latents(post: bpca.BpcaPosterior, n_new: int, rng) -> bpca.BpcaPosterior:
    post = post.copy()
    z, prec, cov = bpca.new_latents(rng, n_new, post.z_mean.shape[1])
    post.z_mean = np.vstack([post.z_mean, z])
    post.z_prec = np.concatenate([post.z_prec, prec])
    post.z_cov = np.concatenate([post.z_cov, cov])
    return post


def run_online_dbpca(scene: CubeScene, schedule, config: bpca.BpcaModelConfig, solver: badmm.SolverConfig,
                     graph: NetworkGraph | None = None, mask=None):
    """Distributed fits on growing frame sets, warm-starting each step.

    Each step reuses the previous step's posteriors, auxiliaries and duals;
    latents of newly exposed columns start fresh.  ``mask`` (optional) is a
    mask of the full measurement matrix.  Returns ``(steps, last_fit)``.
    """
    graph = build_topology("ring", scene.camera_count) if graph is None else graph
    full = assemble_measurement(scene)
    steps, fit, prev_frames = [], None, 0
    for k, frames in enumerate(schedule):
        cols = schedule_columns(scene, frames)
        flat = [c for block in cols for c in block]
        X = full.values[:, flat]
        sub_mask = None if mask is None else np.asarray(mask, bool)[:, flat]
        partition = partition_blocks([len(b) for b in cols])
        posts = None
        if fit is not None:
            rng = np.random.default_rng([solver.seed, k])
            posts = [_extend_latents(n.post, 2 * (frames - prev_frames), rng) for n in fit.nodes]
        fit = badmm.fit_distributed(X, sub_mask, graph, partition, config, solver, warm_start=fit, posts=posts)
        angle = max_subspace_angle(fit.global_means()[1], scene.points3d)
        steps.append(OnlineStep(frames, angle, fit.trace.iterations, fit.trace.converged))
        prev_frames = frames
    return steps, fit


# ---------------------------------------------------------------- matrix completion

@dataclass
class RatingsData:
    data: np.ndarray
    train_mask: np.ndarray
    probe_mask: np.ndarray
    truth: np.ndarray   # noise-free signal


def generate_lowrank_ratings(D: int, N: int, rank: int, noise_sigma: float = 0.1,
                             observed_fraction: float = 0.2, seed: int = 0,
                             probe_fraction: float = 0.1) -> RatingsData:
    """``U V^T / sqrt(rank) + mu 1^T + noise`` with observed entries split into train and probe.

    Every column keeps at least one training entry.
    """
    if not 1 <= rank <= min(D, N):
        raise ConfigurationError("rank must lie in [1, min(D, N)]")
    if not 0.0 < observed_fraction <= 1.0:
        raise ConfigurationError("observed_fraction must lie in (0, 1]")
    if not 0.0 <= probe_fraction < 1.0:
        raise ConfigurationError("probe_fraction must lie in [0, 1)")
    rng = np.random.default_rng(seed)
    U = rng.normal(size=(D, rank))
    V = rng.normal(size=(N, rank))
    mu = rng.normal(size=D)
    truth = U @ V.T / np.sqrt(rank) + mu[:, None]
    data = truth + noise_sigma * rng.normal(size=(D, N))
    observed = rng.random((D, N)) < observed_fraction
    probe = observed & (rng.random((D, N)) < probe_fraction)
    train = observed & ~probe
    for n in np.flatnonzero(~train.any(axis=0)):
        d = np.flatnonzero(observed[:, n])
        d = d[0] if d.size else int(rng.integers(D))
        train[d, n], probe[d, n] = True, False
    return RatingsData(data, train, probe, truth)


def column_mean_baseline(data, train_mask) -> np.ndarray:
    """Predict every entry by the mean of its column's training entries."""
    data = np.asarray(data, dtype=float)
    train_mask = np.asarray(train_mask, dtype=bool)
    counts = train_mask.sum(axis=0)
    sums = np.where(train_mask, data, 0.0).sum(axis=0)
    overall = sums.sum() / max(counts.sum(), 1)
    means = np.where(counts > 0, sums / np.maximum(counts, 1), overall)
    return np.broadcast_to(means, data.shape).copy()


# ---------------------------------------------------------------- point tracks

def load_point_tracks(path):
    """Read a points x (2 frames) CSV of interleaved x/y tracks; empty fields are missing.

    Returns ``(values, mask)`` with NaN at missing entries.
    """
    values = np.genfromtxt(path, delimiter=",", dtype=float, ndmin=2)
    if values.shape[1] % 2:
        raise ConfigurationError(f"{path}: expected an even number of columns (x/y per frame)")
    mask = np.isfinite(values)
    if not mask.any(axis=0).all():
        raise ConfigurationError(f"{path}: some columns have no observed entries")
    return values, mask
