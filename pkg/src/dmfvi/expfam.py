"""Univariate Gaussian exponential-family helpers.

Moment form is ``(mean, variance)``; the minimal natural form is
``(eta1, eta2) = (mean / variance, -1 / (2 variance))``.  The log-partition
drops the constant ``0.5 * log(2 pi)`` into the base measure, so

    A(eta) = -eta1**2 / (4 eta2) - 0.5 * log(-2 eta2)

Every function here broadcasts over numpy arrays as well as scalars.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

VARIANCE_FLOOR = 1e-12


@dataclass(frozen=True)
class GaussianParams:
    mean: float | np.ndarray
    variance: float | np.ndarray

    def __post_init__(self):
        mean = np.asarray(self.mean, dtype=float)
        var = np.asarray(self.variance, dtype=float)
        if not (np.all(np.isfinite(mean)) and np.all(np.isfinite(var))):
            raise ValueError("Gaussian parameters must be finite")
        if np.any(var <= 0):
            raise ValueError("Gaussian variance must be strictly positive")


@dataclass(frozen=True)
class NaturalParams:
    eta1: float | np.ndarray
    eta2: float | np.ndarray

    def __post_init__(self):
        e1 = np.asarray(self.eta1, dtype=float)
        e2 = np.asarray(self.eta2, dtype=float)
        if not (np.all(np.isfinite(e1)) and np.all(np.isfinite(e2))):
            raise ValueError("natural parameters must be finite")
        if np.any(e2 >= 0):
            raise ValueError("eta2 must be strictly negative")


def to_natural(p: GaussianParams) -> NaturalParams:
    var = np.asarray(p.variance, dtype=float)
    return NaturalParams(np.asarray(p.mean) / var, -0.5 / var)


def to_moment(n: NaturalParams) -> GaussianParams:
    var = -0.5 / np.asarray(n.eta2, dtype=float)
    return GaussianParams(np.asarray(n.eta1) * var, var)


def log_partition(n: NaturalParams) -> float | np.ndarray:
    e1 = np.asarray(n.eta1, dtype=float)
    e2 = np.asarray(n.eta2, dtype=float)
    if np.any(e2 >= 0):
        raise ValueError("log-partition is only defined for eta2 < 0")
    return -e1 ** 2 / (4.0 * e2) - 0.5 * np.log(-2.0 * e2)


def log_partition_grad(n: NaturalParams) -> tuple:
    """Gradient of the log-partition: the expected sufficient statistics
    ``(E[x], E[x^2]) = (mean, mean^2 + variance)``."""
    p = to_moment(n)
    mean = np.asarray(p.mean)
    var = np.asarray(p.variance)
    return mean, mean ** 2 + var


def gaussian_kl(p: GaussianParams, q: GaussianParams) -> float | np.ndarray:
    """KL(p || q) between univariate Gaussians."""
    return kl_moments(p.mean, p.variance, q.mean, q.variance)


def kl_moments(mp, vp, mq, vq):
    """KL(N(mp, vp) || N(mq, vq)) from raw moment arrays, no validation."""
    return (mp - mq) ** 2 / (2.0 * vq) + 0.5 * (np.log(vq) - np.log(vp)) + 0.5 * vp / vq - 0.5


def bregman_divergence(lhs: NaturalParams, rhs: NaturalParams) -> float | np.ndarray:
    """Bregman divergence of the log-partition, ``B(lhs, rhs)``.

    Equals ``KL(P_rhs || P_lhs)``; note the argument reversal.
    """
    g1, g2 = log_partition_grad(rhs)
    d1 = np.asarray(lhs.eta1) - np.asarray(rhs.eta1)
    d2 = np.asarray(lhs.eta2) - np.asarray(rhs.eta2)
    return log_partition(lhs) - log_partition(rhs) - (d1 * g1 + d2 * g2)


def clamp_variance(v: np.ndarray, counter: dict | None = None) -> np.ndarray:
    """Clamp variances to ``VARIANCE_FLOOR``; tallies clamps in ``counter['variance_clamps']``."""
    v = np.asarray(v, dtype=float)
    low = v < VARIANCE_FLOOR
    if np.any(low):
        if counter is not None:
            counter["variance_clamps"] = counter.get("variance_clamps", 0) + int(np.sum(low))
        v = np.where(low, VARIANCE_FLOOR, v)
    return v
