"""Bayesian PCA with fully factorized mean-field variational inference.

Model, for observed entries (d, n) of a D x N data matrix::

    x_dn ~ N(w_d . z_n + mu_d, 1/tau)      z_n  ~ N(0, I_M)
    mu_d ~ N(mu_bar_d, 1/theta)            w_dm ~ N(w_bar_dm, 1/alpha_m)
    tau, alpha_m, theta ~ Gamma(shape, rate)   (or held fixed)

The variational family is ``q(z_n) = N(m_n, Lambda_n^-1)``, independent
Gaussians for every ``mu_d`` and ``w_dm``, and Gamma factors for the learned
precisions.

Several functions take a ``weight`` argument.  It scales every term that
belongs to the global parameters (priors and entropies of mu, W and the
precisions).  A network of ``V`` nodes uses ``weight = 1/V`` so that the sum
of node objectives at consensus equals the centralized objective; a single
node uses ``weight = 1``.
"""
from __future__ import annotations

import copy
import logging
import time
from dataclasses import dataclass, field

import numpy as np
from scipy.special import digamma, gammaln

from .expfam import clamp_variance
from .network import ConfigurationError
from .trace import ConvergenceTrace, TraceRow

log = logging.getLogger(__name__)

LOG_2PI = np.log(2.0 * np.pi)


class DivergenceError(RuntimeError):
    """Raised when the objective becomes non-finite; carries the last good state."""

    def __init__(self, message, state=None, trace=None):
        super().__init__(message)
        self.state = state
        self.trace = trace


@dataclass
class GammaParams:
    shape: float | np.ndarray
    rate: float | np.ndarray

    def __post_init__(self):
        self.shape = np.asarray(self.shape, dtype=float)
        self.rate = np.asarray(self.rate, dtype=float)
        if np.any(self.shape <= 0) or np.any(self.rate <= 0):
            raise ValueError("Gamma shape and rate must be strictly positive")

    @property
    def mean(self):
        return self.shape / self.rate

    @property
    def mean_log(self):
        return digamma(self.shape) - np.log(self.rate)

    def entropy(self):
        a, b = self.shape, self.rate
        return a - np.log(b) + gammaln(a) + (1.0 - a) * digamma(a)


def gamma_expected_log_prior(q: GammaParams, a0: float, b0: float):
    """E_q[log Gamma(x; a0, b0)]."""
    return a0 * np.log(b0) - gammaln(a0) + (a0 - 1.0) * q.mean_log - b0 * q.mean


@dataclass
class BpcaModelConfig:
    data_dim: int
    latent_dim: int
    prior_mean_mu: np.ndarray | None = None
    prior_mean_w: np.ndarray | None = None
    learn_tau: bool = True
    learn_alpha: bool = True
    learn_theta: bool = True
    tau: float = 1.0
    alpha: float = 1.0
    theta: float = 1.0
    a_tau: float = 1e-3
    b_tau: float = 1e-3
    a_alpha: float = 1e-3
    b_alpha: float = 1e-3
    a_theta: float = 1e-3
    b_theta: float = 1e-3

    def __post_init__(self):
        D, M = self.data_dim, self.latent_dim
        if not (D >= M >= 1):
            raise ConfigurationError(f"need data_dim >= latent_dim >= 1, got D={D}, M={M}")
        for name in ("tau", "alpha", "theta", "a_tau", "b_tau", "a_alpha", "b_alpha", "a_theta", "b_theta"):
            if not getattr(self, name) > 0:
                raise ConfigurationError(f"{name} must be positive")
        self.prior_mean_mu = (np.zeros(D) if self.prior_mean_mu is None
                              else np.asarray(self.prior_mean_mu, dtype=float).reshape(D))
        self.prior_mean_w = (np.zeros((D, M)) if self.prior_mean_w is None
                             else np.asarray(self.prior_mean_w, dtype=float).reshape(D, M))


@dataclass
class BpcaPosterior:
    z_mean: np.ndarray   # N x M
    z_prec: np.ndarray   # N x M x M
    z_cov: np.ndarray    # N x M x M, inverse of z_prec
    mu_mean: np.ndarray  # D
    mu_var: np.ndarray   # D
    w_mean: np.ndarray   # D x M
    w_var: np.ndarray    # D x M
    tau: GammaParams
    alpha: GammaParams
    theta: GammaParams
    diagnostics: dict = field(default_factory=dict)

    @property
    def shape(self):
        D, M = self.w_mean.shape
        return D, M, self.z_mean.shape[0]

    def copy(self) -> "BpcaPosterior":
        return copy.deepcopy(self)

    def reconstruct(self) -> np.ndarray:
        """Posterior-mean reconstruction ``E[W] E[Z]^T + E[mu]``."""
        return self.w_mean @ self.z_mean.T + self.mu_mean[:, None]

    def validate(self) -> None:
        D, M, N = self.shape
        if self.z_prec.shape != (N, M, M) or self.mu_mean.shape != (D,) or self.w_var.shape != (D, M):
            raise ValueError("posterior dimensions are inconsistent")
        if np.any(self.mu_var <= 0) or np.any(self.w_var <= 0):
            raise ValueError("posterior variances must be positive")
        if N and not np.allclose(self.z_prec, np.swapaxes(self.z_prec, 1, 2)):
            raise ValueError("latent precisions must be symmetric")
        if N:
            np.linalg.cholesky(self.z_prec)


@dataclass
class HyperMoments:
    tau: float
    log_tau: float
    alpha: np.ndarray
    log_alpha: np.ndarray
    theta: float
    log_theta: float


def hyper_moments(post: BpcaPosterior, config: BpcaModelConfig) -> HyperMoments:
    M = config.latent_dim
    if config.learn_tau:
        tau, log_tau = float(post.tau.mean), float(post.tau.mean_log)
    else:
        tau, log_tau = config.tau, float(np.log(config.tau))
    if config.learn_alpha:
        alpha, log_alpha = np.asarray(post.alpha.mean, float), np.asarray(post.alpha.mean_log, float)
    else:
        alpha, log_alpha = np.full(M, config.alpha), np.full(M, np.log(config.alpha))
    if config.learn_theta:
        theta, log_theta = float(post.theta.mean), float(post.theta.mean_log)
    else:
        theta, log_theta = config.theta, float(np.log(config.theta))
    return HyperMoments(tau, log_tau, alpha, log_alpha, theta, log_theta)


def prepare_data(data, mask=None):
    """Return ``(X0, maskf)``: data with unobserved entries zeroed, and a float mask.

    Zeroing makes every downstream quantity independent of whatever values the
    unobserved entries hold (including NaN).
    """
    data = np.asarray(data, dtype=float)
    if data.ndim != 2:
        raise ValueError("data must be a D x N matrix")
    if mask is None:
        mask = np.isfinite(data)
    mask = np.asarray(mask, dtype=bool)
    if mask.shape != data.shape:
        raise ValueError(f"mask shape {mask.shape} does not match data shape {data.shape}")
    X0 = np.where(mask, data, 0.0)
    return X0, mask.astype(float)


def init_posterior(rng: np.random.Generator, config: BpcaModelConfig, n_samples: int,
                   X0=None, maskf=None) -> BpcaPosterior:
    """Uniform(0, 1) means, unit variances, Gamma factors at their priors.

    When data are given, the mu means start at the observed row means
    instead.  Starting the offset away from the data leaves it to be absorbed
    by ``W z``, a slow mode of coordinate ascent.
    """
    D, M, N = config.data_dim, config.latent_dim, n_samples
    z_mean = rng.uniform(0.0, 1.0, size=(N, M))
    mu_mean = rng.uniform(0.0, 1.0, size=D)
    w_mean = rng.uniform(0.0, 1.0, size=(D, M))
    if X0 is not None:
        counts = maskf.sum(axis=1)
        mu_mean = np.where(counts > 0, (maskf * X0).sum(axis=1) / np.maximum(counts, 1), mu_mean)
    eye = np.broadcast_to(np.eye(M), (N, M, M)).copy()
    return BpcaPosterior(
        z_mean=z_mean, z_prec=eye, z_cov=eye.copy(),
        mu_mean=mu_mean, mu_var=np.ones(D),
        w_mean=w_mean, w_var=np.ones((D, M)),
        tau=GammaParams(config.a_tau, config.b_tau),
        alpha=GammaParams(np.full(M, config.a_alpha), np.full(M, config.b_alpha)),
        theta=GammaParams(config.a_theta, config.b_theta),
    )


def new_latents(rng: np.random.Generator, n_samples: int, latent_dim: int):
    """Fresh latent posteriors (means, precisions, covariances) for appended samples."""
    z_mean = rng.uniform(0.0, 1.0, size=(n_samples, latent_dim))
    eye = np.broadcast_to(np.eye(latent_dim), (n_samples, latent_dim, latent_dim)).copy()
    return z_mean, eye, eye.copy()


def z_second_moments(post: BpcaPosterior) -> np.ndarray:
    """<z_n z_n^T> = Lambda_n^-1 + m_n m_n^T, shape N x M x M."""
    return post.z_cov + np.einsum("nm,nk->nmk", post.z_mean, post.z_mean)


# ---------------------------------------------------------------- latent updates

def update_latents(X0, maskf, post: BpcaPosterior, tau: float) -> None:
    """Exact block update of every q(z_n), in place.

    Only observed rows d of column n contribute to the precision and mean.
    """
    M = post.w_mean.shape[1]
    ww = np.einsum("dm,dk->dmk", post.w_mean, post.w_mean)
    idx = np.arange(M)
    ww[:, idx, idx] += post.w_var
    prec = np.eye(M) + tau * np.einsum("dn,dmk->nmk", maskf, ww)
    cov = np.linalg.inv(prec)
    cov = 0.5 * (cov + np.swapaxes(cov, 1, 2))
    resid = maskf * (X0 - post.mu_mean[:, None])
    rhs = tau * (resid.T @ post.w_mean)
    post.z_prec = prec
    post.z_cov = cov
    post.z_mean = np.einsum("nmk,nk->nm", cov, rhs)


def update_latent(x_n, mask_n, post: BpcaPosterior, tau_mean: float):
    """Single-column latent update; returns ``(m_n, Lambda_n)`` without mutating ``post``."""
    x_n = np.asarray(x_n, dtype=float).reshape(-1, 1)
    mask_n = np.ones_like(x_n, dtype=bool) if mask_n is None else np.asarray(mask_n, bool).reshape(-1, 1)
    X0, maskf = prepare_data(x_n, mask_n)
    tmp = BpcaPosterior(np.zeros((1, post.w_mean.shape[1])), None, None, post.mu_mean, post.mu_var,
                        post.w_mean, post.w_var, post.tau, post.alpha, post.theta)
    update_latents(X0, maskf, tmp, tau_mean)
    return tmp.z_mean[0], tmp.z_prec[0]


# ---------------------------------------------------------------- global coefficients

def expected_sq_residual(X0, maskf, post: BpcaPosterior) -> np.ndarray:
    """E_q[(x_dn - w_d.z_n - mu_d)^2] on observed entries, zero elsewhere."""
    pred = post.w_mean @ post.z_mean.T + post.mu_mean[:, None]
    quad = np.einsum("dm,nmk,dk->dn", post.w_mean, post.z_cov, post.w_mean)
    ezz_diag = np.einsum("nmm->nm", post.z_cov) + post.z_mean ** 2
    var_term = post.w_var @ ezz_diag.T + post.mu_var[:, None]
    return maskf * ((X0 - pred) ** 2 + quad + var_term)


def mu_coefficients(X0, maskf, post, config, hyp: HyperMoments, weight=1.0):
    """Per-entry coefficients of the negative ELBO in mu_d.

    As a function of (mean m, variance v) of q(mu_d) the negative ELBO is
    ``0.5 A m^2 - B m + 0.5 A v - 0.5 weight log v + const``.
    """
    n_obs = maskf.sum(axis=1)
    fitted = post.w_mean @ post.z_mean.T
    A = hyp.tau * n_obs + weight * hyp.theta
    B = hyp.tau * np.sum(maskf * (X0 - fitted), axis=1) + weight * hyp.theta * config.prior_mean_mu
    return A, B


def w_statistics(X0, maskf, post):
    """Sufficient statistics for the W sweep, fixed while it runs.

    Returns ``C`` (D x M x M, sum of <z z^T> over observed n per row) and
    ``b`` (D x M, sum over observed n of (x_dn - E[mu_d]) E[z_n]).
    """
    C = np.einsum("dn,nmk->dmk", maskf, z_second_moments(post))
    b = (maskf * (X0 - post.mu_mean[:, None])) @ post.z_mean
    return C, b


def w_coefficients(C, b, post, config, hyp: HyperMoments, m: int, weight=1.0):
    """Coefficients (A, B) of the negative ELBO in column m of q(W), same form as mu."""
    M = post.w_mean.shape[1]
    others = [k for k in range(M) if k != m]
    cross = np.einsum("dk,dk->d", C[:, m, others], post.w_mean[:, others])
    A = hyp.tau * C[:, m, m] + weight * hyp.alpha[m]
    B = hyp.tau * (b[:, m] - cross) + weight * hyp.alpha[m] * config.prior_mean_w[:, m]
    return A, B


def update_global_central(X0, maskf, post, config, hyp=None, weight=1.0, counter=None) -> None:
    """Exact coordinate updates of q(mu_d) for all d, then q(w_dm) column by column.

    Rows are independent given z, so updating column m for all rows at once is
    the same as a row-major scalar sweep.
    """
    hyp = hyper_moments(post, config) if hyp is None else hyp
    A, B = mu_coefficients(X0, maskf, post, config, hyp, weight)
    post.mu_mean = B / A
    post.mu_var = clamp_variance(weight / A, counter)
    C, b = w_statistics(X0, maskf, post)
    for m in range(post.w_mean.shape[1]):
        A, B = w_coefficients(C, b, post, config, hyp, m, weight)
        post.w_mean[:, m] = B / A
        post.w_var[:, m] = clamp_variance(weight / A, counter)


def update_hyperparams(X0, maskf, post, config, weight=1.0) -> None:
    """Conjugate Gamma updates for whichever precisions are learned.

    With ``weight < 1`` the tau update treats the local likelihood as
    ``1/weight`` times stronger relative to the prior and entropy, which is
    the exact optimum of the weighted objective.
    """
    D, M = config.data_dim, config.latent_dim
    if config.learn_tau:
        S = float(np.sum(expected_sq_residual(X0, maskf, post)))
        n_obs = float(maskf.sum())
        post.tau = GammaParams(config.a_tau + 0.5 * n_obs / weight, config.b_tau + 0.5 * S / weight)
    if config.learn_alpha:
        dev = (post.w_mean - config.prior_mean_w) ** 2 + post.w_var
        post.alpha = GammaParams(np.full(M, config.a_alpha + 0.5 * D), config.b_alpha + 0.5 * dev.sum(axis=0))
    if config.learn_theta:
        dev = (post.mu_mean - config.prior_mean_mu) ** 2 + post.mu_var
        post.theta = GammaParams(config.a_theta + 0.5 * D, config.b_theta + 0.5 * float(dev.sum()))


# ---------------------------------------------------------------- objective

def compute_elbo(data, mask, post: BpcaPosterior, config: BpcaModelConfig, weight=1.0) -> float:
    """Closed-form ELBO; missing entries are excluded from the likelihood."""
    X0, maskf = prepare_data(data, mask)
    return elbo_prepared(X0, maskf, post, config, weight)


def elbo_prepared(X0, maskf, post, config, weight=1.0) -> float:
    hyp = hyper_moments(post, config)
    M = config.latent_dim

    n_obs = maskf.sum()
    lik = 0.5 * n_obs * (hyp.log_tau - LOG_2PI) - 0.5 * hyp.tau * np.sum(expected_sq_residual(X0, maskf, post))

    # E log p(z) + H(z); the 2 pi constants cancel
    if post.z_mean.shape[0]:
        tr = np.einsum("nmm->n", post.z_cov)
        logdet = -np.linalg.slogdet(post.z_prec)[1]
        local = np.sum(-0.5 * tr - 0.5 * np.sum(post.z_mean ** 2, axis=1) + 0.5 * logdet + 0.5 * M)
    else:
        local = 0.0

    mu_dev = (post.mu_mean - config.prior_mean_mu) ** 2 + post.mu_var
    g_mu = np.sum(0.5 * hyp.log_theta - 0.5 * hyp.theta * mu_dev + 0.5 + 0.5 * np.log(post.mu_var))
    w_dev = (post.w_mean - config.prior_mean_w) ** 2 + post.w_var
    g_w = np.sum(0.5 * hyp.log_alpha[None, :] - 0.5 * hyp.alpha[None, :] * w_dev + 0.5 + 0.5 * np.log(post.w_var))

    g_hyp = 0.0
    if config.learn_tau:
        g_hyp += gamma_expected_log_prior(post.tau, config.a_tau, config.b_tau) + post.tau.entropy()
    if config.learn_alpha:
        g_hyp += np.sum(gamma_expected_log_prior(post.alpha, config.a_alpha, config.b_alpha) + post.alpha.entropy())
    if config.learn_theta:
        g_hyp += gamma_expected_log_prior(post.theta, config.a_theta, config.b_theta) + post.theta.entropy()

    return float(lik + local + weight * (g_mu + g_w + g_hyp))


# ---------------------------------------------------------------- driver

def sweep(X0, maskf, post, config, weight=1.0, counter=None) -> None:
    """One full coordinate sweep: latents, mu, W, then precisions."""
    update_latents(X0, maskf, post, hyper_moments(post, config).tau)
    update_global_central(X0, maskf, post, config, weight=weight, counter=counter)
    update_hyperparams(X0, maskf, post, config, weight)


def relative_change(new: float, old: float) -> float:
    return abs(new - old) / max(abs(old), 1e-300)


def fit_centralized(data, mask, config: BpcaModelConfig, init_seed: int = 0, tol: float = 1e-3,
                    max_iter: int = 500, init: BpcaPosterior | None = None):
    """Mean-field coordinate ascent on all data at once.

    Stops when the relative change of the objective (negative ELBO) drops
    below ``tol``.  Returns ``(posterior, trace)``.
    """
    if tol <= 0:
        raise ConfigurationError("tol must be positive")
    X0, maskf = prepare_data(data, mask)
    _check_columns(maskf)
    if X0.shape[0] != config.data_dim:
        raise ConfigurationError(f"data has {X0.shape[0]} rows, config expects {config.data_dim}")
    post = init.copy() if init is not None else init_posterior(np.random.default_rng(init_seed), config, X0.shape[1], X0, maskf)
    counter = post.diagnostics
    trace = ConvergenceTrace()
    prev = -elbo_prepared(X0, maskf, post, config)
    t0 = time.perf_counter()
    for it in range(1, max_iter + 1):
        good = post.copy()
        sweep(X0, maskf, post, config, counter=counter)
        obj = -elbo_prepared(X0, maskf, post, config)
        if not np.isfinite(obj):
            raise DivergenceError(f"non-finite objective at iteration {it}", state=good, trace=trace)
        trace.append(TraceRow(it, obj, wall_ms=1e3 * (time.perf_counter() - t0)))
        if relative_change(obj, prev) < tol:
            trace.converged = True
            break
        prev = obj
    log.debug("centralized fit: %d iterations, objective %.6g", trace.iterations, trace.final_objective)
    return post, trace


def _check_columns(maskf):
    empty = np.flatnonzero(maskf.sum(axis=0) == 0)
    if empty.size:
        raise ConfigurationError(f"columns {empty.tolist()[:10]} have no observed entries")
