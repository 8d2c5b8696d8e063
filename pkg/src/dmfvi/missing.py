"""Observation masks (missing at random / not at random) and reconstruction error.

A mask is a boolean D x N array, ``True`` where the entry is observed.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .network import ConfigurationError

MASK_KINDS = ("mar", "mnar_threshold", "mnar_occlusion")


@dataclass(frozen=True)
class MaskSpec:
    kind: str = "mar"
    missing_ratio: float = 0.0
    quantile: float = 0.5
    seed: int = 0

    def __post_init__(self):
        if self.kind not in MASK_KINDS:
            raise ConfigurationError(f"unknown mask kind {self.kind!r}; expected one of {MASK_KINDS}")
        if not 0.0 <= self.missing_ratio < 1.0:
            raise ConfigurationError("missing_ratio must lie in [0, 1)")
        if not 0.0 < self.quantile < 1.0:
            raise ConfigurationError("quantile must lie in (0, 1)")


def generate_mar_mask(D: int, N: int, ratio: float, seed: int = 0) -> np.ndarray:
    """Each entry independently missing with probability ``ratio``.

    Columns left with no observed entry are re-drawn (same rule) until every
    column has at least one observation.
    """
    if not 0.0 <= ratio < 1.0:
        raise ConfigurationError(f"missing ratio must lie in [0, 1), got {ratio}")
    rng = np.random.default_rng(seed)
    mask = rng.random((D, N)) >= ratio
    empty = np.flatnonzero(~mask.any(axis=0))
    while empty.size:
        mask[:, empty] = rng.random((D, empty.size)) >= ratio
        empty = empty[~mask[:, empty].any(axis=0)]
    return mask


def generate_mnar_threshold_mask(data, quantile: float, seed: int = 0) -> np.ndarray:
    """Censor entries below the empirical ``quantile`` of the data.

    Missingness depends on the value itself: entries at or below the k-th
    smallest value, ``k = floor(q * size)``, are missing, so distinct values
    give exactly k missing entries.  ``seed`` is accepted for a uniform
    mask-generator signature; the rule is deterministic.
    """
    data = np.asarray(data, dtype=float)
    if not 0.0 < quantile < 1.0:
        raise ConfigurationError(f"quantile must lie in (0, 1), got {quantile}")
    if np.ptp(data) == 0:
        raise ConfigurationError("cannot threshold constant data")
    k = int(np.floor(quantile * data.size))
    if k == 0:
        return np.ones(data.shape, dtype=bool)
    threshold = np.partition(data.ravel(), k - 1)[k - 1]
    return data > threshold


def generate_mnar_occlusion_mask(scene, frames: int | None = None) -> np.ndarray:
    """Self-occlusion mask for a cube scene, laid out like its measurement matrix.

    A point is hidden in a (camera, frame) view when every cube face it lies
    on is back-facing, i.e. ``normal . view_direction >= 0``.  The x and y
    entries of a hidden observation are masked together.  ``frames`` keeps
    only the first frames of each camera.
    """
    vis = scene.visibility()               # cameras x frames x P
    if frames is not None:
        vis = vis[:, :frames]
    C, F, P = vis.shape
    return np.repeat(vis.transpose(2, 0, 1).reshape(P, C * F), 2, axis=1)


def reconstruction_rmse(data, mask_eval, reconstruction) -> float:
    """RMSE of a reconstruction against ``data`` over the entries in ``mask_eval``.

    ``reconstruction`` is a D x N array or anything with a ``reconstruct()``
    method returning one (e.g. a posterior).
    """
    data = np.asarray(data, dtype=float)
    mask_eval = np.asarray(mask_eval, dtype=bool)
    if not mask_eval.any():
        raise ConfigurationError("evaluation mask selects no entries")
    pred = reconstruction.reconstruct() if hasattr(reconstruction, "reconstruct") else np.asarray(reconstruction)
    err = (pred - data)[mask_eval]
    return float(np.sqrt(np.mean(err ** 2)))


def save_mask_csv(path, mask) -> None:
    np.savetxt(path, np.asarray(mask, dtype=int), fmt="%d", delimiter=",")


def load_mask_csv(path, shape=None) -> np.ndarray:
    mask = np.loadtxt(path, delimiter=",", dtype=int, ndmin=2)
    if not np.isin(mask, (0, 1)).all():
        raise ConfigurationError(f"mask file {path} must contain only 0/1 entries")
    if shape is not None and mask.shape != tuple(shape):
        raise ConfigurationError(f"mask shape {mask.shape} does not match data shape {tuple(shape)}")
    return mask.astype(bool)
