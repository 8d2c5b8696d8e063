"""Distributed mean-field VI for Bayesian PCA via Bregman ADMM.

Every node keeps its own copy of the global posteriors q(mu_d), q(w_dm).
Each ordered pair (i, j), j in B_i, owns auxiliary moments (rho, phi) and
constraints ``m_i = rho_ij = m_j`` and ``v_i = phi_ij = v_j`` on every mean
and variance entry.  One round is

1. local phase: every node minimizes its augmented Lagrangian coordinate-wise,
   with Bregman penalty ``eta * KL(N(rho, phi) || N(m_i, v_i))`` against each
   auxiliary it is constrained to (its own rho_ij and every neighbour's rho_ji);
2. auxiliary phase: each (rho_ij, phi_ij) minimizes its Lagrangian with the
   reversed penalty ``eta * KL(N(m_i, v_i) || N(rho, phi))`` (plus the j side);
3. dual ascent with step eta on all eight multiplier families.

The network objective is the sum of node ELBOs whose global prior and
entropy terms carry weight ``1/|V|`` (see :mod:`dmfvi.bpca`); at consensus it
equals the centralized ELBO.  Each node's subproblem multiplies its weighted
ELBO by ``|V|``, so it estimates the full objective from local data and the
KL penalty is measured against a full-size posterior, independent of |V|.
"""
from __future__ import annotations

import logging
import time
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import minimize_scalar

from . import bpca
from .bpca import BpcaModelConfig, BpcaPosterior, DivergenceError
from .expfam import VARIANCE_FLOOR, clamp_variance, kl_moments
from .network import ConfigurationError, DataPartition, NetworkGraph
from .trace import ConvergenceTrace, TraceRow

log = logging.getLogger(__name__)

VARIANCE_CEILING = 1e6
# Variance box used whenever penalties are active: the mean penalty has
# curvature eta / v while duals step by eta, so v <= 1 keeps the dual step
# within the penalty curvature.
PENALIZED_VARIANCE_CAP = 1.0


class NoAdmissibleRoot(ArithmeticError):
    pass


@dataclass
class SolverConfig:
    eta: float = 10.0
    tol: float = 1e-3
    max_iter: int = 200
    seed: int = 0
    consensus_tol: float = 1e-3

    def __post_init__(self):
        if not self.eta > 0:
            raise ConfigurationError("eta must be positive")
        if not self.tol > 0:
            raise ConfigurationError("tol must be positive")
        if self.max_iter < 1:
            raise ConfigurationError("max_iter must be at least 1")
        if not self.consensus_tol > 0:
            raise ConfigurationError("consensus_tol must be positive")


@dataclass
class NodeState:
    node_id: int
    X0: np.ndarray
    maskf: np.ndarray
    post: BpcaPosterior
    config: BpcaModelConfig
    out_edges: np.ndarray  # indices of (node_id, j)
    in_edges: np.ndarray   # indices of (j, node_id)
    columns: tuple = ()

    @property
    def penalty_count(self) -> int:
        return len(self.out_edges) + len(self.in_edges)


@dataclass
class EdgeAuxState:
    edges: list
    rho_mu: np.ndarray  # E x D
    phi_mu: np.ndarray
    rho_w: np.ndarray   # E x D x M
    phi_w: np.ndarray

    def copy(self):
        return EdgeAuxState(list(self.edges), self.rho_mu.copy(), self.phi_mu.copy(),
                            self.rho_w.copy(), self.phi_w.copy())


_DUAL_FIELDS = ("gamma_mu_1", "gamma_mu_2", "beta_mu_1", "beta_mu_2",
                "gamma_w_1", "gamma_w_2", "beta_w_1", "beta_w_2")


@dataclass
class DualState:
    gamma_mu_1: np.ndarray
    gamma_mu_2: np.ndarray
    beta_mu_1: np.ndarray
    beta_mu_2: np.ndarray
    gamma_w_1: np.ndarray
    gamma_w_2: np.ndarray
    beta_w_1: np.ndarray
    beta_w_2: np.ndarray

    @classmethod
    def zeros(cls, n_edges: int, D: int, M: int) -> "DualState":
        mu = {f: np.zeros((n_edges, D)) for f in _DUAL_FIELDS[:4]}
        w = {f: np.zeros((n_edges, D, M)) for f in _DUAL_FIELDS[4:]}
        return cls(**mu, **w)

    def copy(self):
        return DualState(**{f: getattr(self, f).copy() for f in _DUAL_FIELDS})

    def max_abs_diff(self, other: "DualState") -> float:
        return max(float(np.max(np.abs(getattr(self, f) - getattr(other, f)), initial=0.0))
                   for f in _DUAL_FIELDS)


@dataclass
class DistributedFit:
    graph: NetworkGraph
    nodes: list
    aux: EdgeAuxState
    duals: DualState
    trace: ConvergenceTrace
    diagnostics: dict = field(default_factory=dict)

    @property
    def posteriors(self) -> list:
        return [n.post for n in self.nodes]

    def global_means(self):
        """Network-average posterior means of (mu, W)."""
        mu = np.mean([n.post.mu_mean for n in self.nodes], axis=0)
        w = np.mean([n.post.w_mean for n in self.nodes], axis=0)
        return mu, w

    def reconstruct(self, n_columns: int) -> np.ndarray:
        """Posterior-mean reconstruction of the full D x N matrix, each node filling its own columns."""
        D = self.nodes[0].post.w_mean.shape[0]
        out = np.full((D, n_columns), np.nan)
        for node in self.nodes:
            out[:, list(node.columns)] = node.post.reconstruct()
        return out


# ---------------------------------------------------------------- stationarity roots

def _quadratic_roots(a2, a1, a0):
    """Both real roots (nan where none), using the cancellation-free form."""
    a2, a1, a0 = np.broadcast_arrays(*(np.asarray(x, dtype=float) for x in (a2, a1, a0)))
    disc = a1 * a1 - 4.0 * a2 * a0
    sq = np.sqrt(np.where(disc >= 0, disc, np.nan))
    q = -0.5 * (a1 + np.copysign(sq, a1))
    with np.errstate(divide="ignore", invalid="ignore"):
        linear = a2 == 0
        r1 = np.where(linear, -a0 / a1, q / a2)
        r2 = np.where(linear, np.nan, a0 / q)
    return r1, r2


def select_roots(a2, a1, a0, admissible_floor=VARIANCE_FLOOR, objective=None):
    """Vectorized root selection; returns ``(root, ok)``.

    Of the real roots above ``admissible_floor`` the one with the lower
    ``objective`` wins.  Without an objective, the root where the polynomial
    crosses upward (a local minimum of an objective whose derivative has the
    polynomial's sign) is taken.
    """
    r1, r2 = _quadratic_roots(a2, a1, a0)
    ok1 = np.isfinite(r1) & (r1 > admissible_floor)
    ok2 = np.isfinite(r2) & (r2 > admissible_floor)
    both = ok1 & ok2
    root = np.where(ok1, r1, r2)
    if np.any(both):
        s1 = np.where(both, r1, 1.0)
        s2 = np.where(both, r2, 1.0)
        if objective is not None:
            pick_second = objective(s2) < objective(s1)
        else:
            a2b, a1b = np.broadcast_arrays(np.asarray(a2, float), np.asarray(a1, float))
            pick_second = (2 * a2b * s2 + a1b) > (2 * a2b * s1 + a1b)
        root = np.where(both & pick_second, r2, root)
    return root, ok1 | ok2


def solve_stationarity_quadratic(a2, a1, a0, admissible_floor=VARIANCE_FLOOR, objective=None) -> float:
    """Root of ``a2 x^2 + a1 x + a0`` above ``admissible_floor`` minimizing ``objective``.

    Raises :class:`NoAdmissibleRoot` when there is none; callers then fall back
    to numeric minimization.
    """
    for c in (a2, a1, a0):
        if not np.isfinite(c):
            raise ValueError("coefficients must be finite")
    root, ok = select_roots(a2, a1, a0, admissible_floor, objective)
    if not bool(ok):
        raise NoAdmissibleRoot(f"no root of {a2} x^2 + {a1} x + {a0} above {admissible_floor}")
    return float(root)


def _fallback_minimize(f, upper, counter):
    counter["root_fallbacks"] = counter.get("root_fallbacks", 0) + 1
    res = minimize_scalar(lambda u: f(np.exp(u)), bounds=(np.log(VARIANCE_FLOOR), np.log(upper)),
                          method="bounded", options={"xatol": 1e-12})
    # the bounded method never evaluates the endpoints themselves
    return min((float(np.exp(res.x)), VARIANCE_FLOOR, float(upper)), key=f)


def box_minimize(a2, a1, a0, objective, upper, counter):
    """Minimize a 1-D variance objective over ``[VARIANCE_FLOOR, upper]``.

    ``upper`` is itself limited to ``VARIANCE_CEILING``.

    ``a2 x^2 + a1 x + a0`` has the sign of the objective's derivative.  The
    minimizer is the admissible stationary root clipped to the box, unless the
    upper end is lower.  Entries with no admissible root go to a bounded
    numeric minimizer and are counted in ``counter['root_fallbacks']``.
    The upper bound matters when a negative linear dual term outweighs the
    data curvature; the objective is then unbounded below on ``(0, inf)``.
    """
    upper = np.clip(np.asarray(upper, dtype=float), 2.0 * VARIANCE_FLOOR, VARIANCE_CEILING)
    a2, a1, a0, upper = np.broadcast_arrays(*(np.asarray(x, dtype=float) for x in (a2, a1, a0, upper)))
    root, ok = select_roots(a2, a1, a0, VARIANCE_FLOOR, objective)
    x = np.minimum(np.where(ok, root, upper), upper)
    x = np.where(objective(upper) < objective(x), upper, x)
    if not np.all(ok):
        x = np.array(x, dtype=float)
        for idx in zip(*np.nonzero(~ok)):
            x[idx] = _fallback_minimize(lambda v, idx=idx: float(objective(np.full(x.shape, v))[idx]),
                                        upper[idx], counter)
    return clamp_variance(x, counter)


# ---------------------------------------------------------------- penalized scalar updates

def penalized_mean(A, B, g, v, rhos, eta):
    """Minimizer over m of ``0.5 A m^2 - B m + g m + eta sum_k (m - rho_k)^2 / (2 v)``.

    ``rhos`` has the penalty axis first; only the quadratic part of the KL
    penalty depends on the mean.
    """
    K = rhos.shape[0]
    return (B - g + (eta / v) * rhos.sum(axis=0)) / (A + eta * K / v)


def penalized_variance(A, h, m, rhos, phis, eta, weight, upper, counter):
    """Minimizer over ``v`` in ``[VARIANCE_FLOOR, upper]`` of
    ``(0.5 A + h) v - 0.5 weight log v + eta sum_k KL(N(rho_k, phi_k) || N(m, v))``.

    ``upper`` is the prior variance, which bounds the variance at every
    centralized fixed point.
    """
    K = rhos.shape[0]
    C = eta * np.sum((m - rhos) ** 2 + phis, axis=0)
    lin = 0.5 * A + h
    logc = 0.5 * (eta * K - weight)

    def objective(v):
        return lin * v + logc * np.log(v) + C / (2.0 * v)

    return box_minimize(A + 2.0 * h, eta * K - weight, -C, objective, upper, counter)


def node_terms(node: NodeState, aux: EdgeAuxState, duals: DualState):
    """Penalty targets and summed dual coefficients seen by node ``i``.

    Returns ``(rho_mu, phi_mu, rho_w, phi_w, g_mu, h_mu, g_w, h_w)``; the
    auxiliaries are stacked along a leading penalty axis, own edges first.
    """
    out, inn = node.out_edges, node.in_edges
    rho_mu = np.concatenate([aux.rho_mu[out], aux.rho_mu[inn]])
    phi_mu = np.concatenate([aux.phi_mu[out], aux.phi_mu[inn]])
    rho_w = np.concatenate([aux.rho_w[out], aux.rho_w[inn]])
    phi_w = np.concatenate([aux.phi_w[out], aux.phi_w[inn]])
    g_mu = duals.gamma_mu_1[out].sum(axis=0) - duals.gamma_mu_2[inn].sum(axis=0)
    h_mu = duals.beta_mu_1[out].sum(axis=0) - duals.beta_mu_2[inn].sum(axis=0)
    g_w = duals.gamma_w_1[out].sum(axis=0) - duals.gamma_w_2[inn].sum(axis=0)
    h_w = duals.beta_w_1[out].sum(axis=0) - duals.beta_w_2[inn].sum(axis=0)
    return rho_mu, phi_mu, rho_w, phi_w, g_mu, h_mu, g_w, h_w


def node_mu_update(node: NodeState, terms, hyp, eta: float, weight: float) -> None:
    """Mean then variance of every q(mu_d) on node ``i``, in place.

    ``terms`` is the tuple from :func:`node_terms`; entries are independent,
    so the vectorized update equals a scalar sweep over d.
    """
    post, cfg = node.post, node.config
    rho_mu, phi_mu, _, _, g_mu, h_mu, _, _ = terms
    A, B = bpca.mu_coefficients(node.X0, node.maskf, post, cfg, hyp, weight)
    A, B = A / weight, B / weight
    post.mu_mean = penalized_mean(A, B, g_mu, post.mu_var, rho_mu, eta)
    post.mu_var = penalized_variance(A, h_mu, post.mu_mean, rho_mu, phi_mu, eta, 1.0,
                                     np.minimum(1.0 / hyp.theta, _variance_cap(node)), post.diagnostics)


def node_w_update(node: NodeState, terms, hyp, C, b, m: int, eta: float, weight: float) -> None:
    """Mean then variance of q(w_dm) for every row d of column ``m``, in place.

    ``C, b`` come from :func:`dmfvi.bpca.w_statistics` and stay fixed while
    the columns are swept.
    """
    post, cfg = node.post, node.config
    _, _, rho_w, phi_w, _, _, g_w, h_w = terms
    A, B = bpca.w_coefficients(C, b, post, cfg, hyp, m, weight)
    A, B = A / weight, B / weight
    post.w_mean[:, m] = penalized_mean(A, B, g_w[:, m], post.w_var[:, m], rho_w[:, :, m], eta)
    post.w_var[:, m] = penalized_variance(A, h_w[:, m], post.w_mean[:, m], rho_w[:, :, m], phi_w[:, :, m],
                                          eta, 1.0, np.minimum(1.0 / hyp.alpha[m], _variance_cap(node)),
                                          post.diagnostics)


def _variance_cap(node: NodeState) -> float:
    return PENALIZED_VARIANCE_CAP if node.penalty_count else np.inf


def local_update_phase(node: NodeState, aux: EdgeAuxState, duals: DualState, eta: float, weight: float) -> None:
    """One coordinate sweep of node ``i``'s augmented Lagrangian, in place.

    Order: latents, then (mean, variance) of every mu_d, then of every w_dm
    column by column, then the precision hyperparameters.  The latent and
    hyperparameter updates carry no penalty.  Variances are boxed by the
    node's current prior variance and, when the node has penalties, by
    ``PENALIZED_VARIANCE_CAP``.
    """
    post, cfg = node.post, node.config
    terms = node_terms(node, aux, duals)
    hyp = bpca.hyper_moments(post, cfg)
    bpca.update_latents(node.X0, node.maskf, post, hyp.tau)
    node_mu_update(node, terms, hyp, eta, weight)
    C, b = bpca.w_statistics(node.X0, node.maskf, post)
    for m in range(cfg.latent_dim):
        node_w_update(node, terms, hyp, C, b, m, eta, weight)
    bpca.update_hyperparams(node.X0, node.maskf, post, cfg, weight)


def _endpoint_moments(nodes, edges, attr):
    src = np.stack([getattr(nodes[i].post, attr) for i, _ in edges])
    dst = np.stack([getattr(nodes[j].post, attr) for _, j in edges])
    return src, dst


def _aux_pair(mi, vi, mj, vj, phi_old, g, h, eta, upper, counter):
    rho = 0.5 * (mi + mj) - g * phi_old / (2.0 * eta)
    S = (mi - rho) ** 2 + (mj - rho) ** 2 + vi + vj

    def objective(p):
        return h * p + eta * (S / (2.0 * p) + np.log(p))

    return rho, box_minimize(2.0 * h, 2.0 * eta, -eta * S, objective, upper, counter)


def prior_variances(nodes):
    """Per-node prior variances ``(1/E[theta], 1/E[alpha])``, shapes (V,) and (V, M)."""
    mu, w = [], []
    for n in nodes:
        hyp = bpca.hyper_moments(n.post, n.config)
        mu.append(1.0 / hyp.theta)
        w.append(1.0 / hyp.alpha)
    return np.array(mu), np.array(w)


def aux_update_phase(nodes, aux: EdgeAuxState, duals: DualState, eta: float, counter=None) -> EdgeAuxState:
    """Closed-form (rho, then phi) update of every ordered-edge auxiliary.

    rho is the stationary point of the quadratic in the mean; phi is the
    admissible root of its stationarity quadratic, boxed by the larger of
    the two endpoint prior variances and by ``PENALIZED_VARIANCE_CAP``.
    """
    counter = {} if counter is None else counter
    if not aux.edges:
        return aux.copy()
    src = np.array([i for i, _ in aux.edges])
    dst = np.array([j for _, j in aux.edges])
    cap_mu, cap_w = prior_variances(nodes)
    upper_mu = np.minimum(np.maximum(cap_mu[src], cap_mu[dst]), PENALIZED_VARIANCE_CAP)[:, None]
    upper_w = np.minimum(np.maximum(cap_w[src], cap_w[dst]), PENALIZED_VARIANCE_CAP)[:, None, :]
    mi, mj = _endpoint_moments(nodes, aux.edges, "mu_mean")
    vi, vj = _endpoint_moments(nodes, aux.edges, "mu_var")
    rho_mu, phi_mu = _aux_pair(mi, vi, mj, vj, aux.phi_mu, duals.gamma_mu_2 - duals.gamma_mu_1,
                               duals.beta_mu_2 - duals.beta_mu_1, eta, upper_mu, counter)
    mi, mj = _endpoint_moments(nodes, aux.edges, "w_mean")
    vi, vj = _endpoint_moments(nodes, aux.edges, "w_var")
    rho_w, phi_w = _aux_pair(mi, vi, mj, vj, aux.phi_w, duals.gamma_w_2 - duals.gamma_w_1,
                             duals.beta_w_2 - duals.beta_w_1, eta, upper_w, counter)
    return EdgeAuxState(list(aux.edges), rho_mu, phi_mu, rho_w, phi_w)


def dual_update_phase(nodes, aux: EdgeAuxState, duals: DualState, eta: float) -> DualState:
    """Gradient ascent with step eta on every constraint residual."""
    if not aux.edges:
        return duals.copy()
    mi, mj = _endpoint_moments(nodes, aux.edges, "mu_mean")
    vi, vj = _endpoint_moments(nodes, aux.edges, "mu_var")
    wi, wj = _endpoint_moments(nodes, aux.edges, "w_mean")
    si, sj = _endpoint_moments(nodes, aux.edges, "w_var")
    return DualState(
        gamma_mu_1=duals.gamma_mu_1 + eta * (mi - aux.rho_mu),
        gamma_mu_2=duals.gamma_mu_2 + eta * (aux.rho_mu - mj),
        beta_mu_1=duals.beta_mu_1 + eta * (vi - aux.phi_mu),
        beta_mu_2=duals.beta_mu_2 + eta * (aux.phi_mu - vj),
        gamma_w_1=duals.gamma_w_1 + eta * (wi - aux.rho_w),
        gamma_w_2=duals.gamma_w_2 + eta * (aux.rho_w - wj),
        beta_w_1=duals.beta_w_1 + eta * (si - aux.phi_w),
        beta_w_2=duals.beta_w_2 + eta * (aux.phi_w - sj),
    )


def consensus_residual(nodes, aux: EdgeAuxState):
    """``(primal_residual, max_edge_gap)`` over all mu/W means and variances."""
    if not aux.edges:
        return 0.0, 0.0
    primal = 0.0
    for attr, rho in (("mu_mean", aux.rho_mu), ("mu_var", aux.phi_mu),
                      ("w_mean", aux.rho_w), ("w_var", aux.phi_w)):
        vi, vj = _endpoint_moments(nodes, aux.edges, attr)
        primal = max(primal, float(np.max(np.abs(vi - rho))), float(np.max(np.abs(rho - vj))))
    gap = 0.0
    for i, j in aux.edges:
        if i < j:
            a, b = nodes[i].post, nodes[j].post
            for attr in ("mu_mean", "mu_var", "w_mean", "w_var"):
                gap = max(gap, float(np.max(np.abs(getattr(a, attr) - getattr(b, attr)))))
    return primal, gap


def parameter_scale(nodes) -> float:
    """Largest magnitude among all constrained posterior moments across the network."""
    scale = 0.0
    for n in nodes:
        for attr in ("mu_mean", "mu_var", "w_mean", "w_var"):
            scale = max(scale, float(np.max(np.abs(getattr(n.post, attr)))))
    return max(scale, np.finfo(float).tiny)


# ---------------------------------------------------------------- objectives

def network_objective(nodes, weight: float) -> float:
    """Negative sum of the (weighted) node ELBOs."""
    return -sum(bpca.elbo_prepared(n.X0, n.maskf, n.post, n.config, weight) for n in nodes)


def node_lagrangian(node: NodeState, aux: EdgeAuxState, duals: DualState, eta: float, weight: float,
                    terms=None) -> float:
    """Node i's augmented Lagrangian (terms that depend on node i's variables).

    The ELBO part is the weighted node ELBO divided by ``weight``.  ``terms``
    may carry a precomputed :func:`node_terms` result for the same aux/duals.
    """
    post = node.post
    rho_mu, phi_mu, rho_w, phi_w, g_mu, h_mu, g_w, h_w = node_terms(node, aux, duals) if terms is None else terms
    val = -bpca.elbo_prepared(node.X0, node.maskf, post, node.config, weight) / weight
    val += np.sum(g_mu * post.mu_mean + h_mu * post.mu_var)
    val += np.sum(g_w * post.w_mean + h_w * post.w_var)
    val += eta * np.sum(kl_moments(rho_mu, phi_mu, post.mu_mean[None], post.mu_var[None]))
    val += eta * np.sum(kl_moments(rho_w, phi_w, post.w_mean[None], post.w_var[None]))
    return float(val)


def aux_lagrangian(nodes, aux: EdgeAuxState, duals: DualState, eta: float) -> float:
    """Auxiliary-phase Lagrangian (terms that depend on rho/phi), with reversed KL."""
    if not aux.edges:
        return 0.0
    val = 0.0
    for pre, rho, phi in (("mu", aux.rho_mu, aux.phi_mu), ("w", aux.rho_w, aux.phi_w)):
        mi, mj = _endpoint_moments(nodes, aux.edges, f"{pre}_mean")
        vi, vj = _endpoint_moments(nodes, aux.edges, f"{pre}_var")
        g = getattr(duals, f"gamma_{pre}_2") - getattr(duals, f"gamma_{pre}_1")
        h = getattr(duals, f"beta_{pre}_2") - getattr(duals, f"beta_{pre}_1")
        val += np.sum(g * rho + h * phi)
        val += eta * np.sum(kl_moments(mi, vi, rho, phi) + kl_moments(mj, vj, rho, phi))
    return float(val)


# ---------------------------------------------------------------- driver

def build_nodes(data, mask, graph: NetworkGraph, partition: DataPartition, config: BpcaModelConfig,
                rng: np.random.Generator, posts=None) -> list:
    """Slice data per node and initialize (or adopt) each node's posterior, node 0 first.

    Fresh posteriors share node 0's initial W means, as if every node drew
    them from a common seed.  Independent draws put the nodes' subspaces at
    arbitrary rotations to one another, which consensus then undoes slowly.
    """
    X0, maskf = bpca.prepare_data(data, mask)
    if len(partition.assignment) != graph.node_count:
        raise ConfigurationError("partition does not match the graph's node count")
    if partition.total != X0.shape[1] or sorted(c for b in partition.assignment for c in b) != list(range(X0.shape[1])):
        raise ConfigurationError("partition must cover every data column exactly once")
    if X0.shape[0] != config.data_dim:
        raise ConfigurationError(f"data has {X0.shape[0]} rows, config expects {config.data_dim}")
    bpca._check_columns(maskf)
    edges = graph.directed_edges
    nodes = []
    for i, cols in enumerate(partition.assignment):
        cols = list(cols)
        # contiguous slices keep reductions in the same order as the centralized fit
        Xi, mi = np.ascontiguousarray(X0[:, cols]), np.ascontiguousarray(maskf[:, cols])
        post = posts[i] if posts is not None else bpca.init_posterior(rng, config, len(cols), Xi, mi)
        out = np.array([k for k, (a, _) in enumerate(edges) if a == i], dtype=int)
        inn = np.array([k for k, (_, b) in enumerate(edges) if b == i], dtype=int)
        if posts is None and nodes:
            post.w_mean = nodes[0].post.w_mean.copy()
        nodes.append(NodeState(i, Xi, mi, post, config, out, inn, tuple(cols)))
    return nodes


def init_aux(nodes, graph: NetworkGraph) -> EdgeAuxState:
    """Auxiliaries start at the source node's initial posterior moments."""
    edges = graph.directed_edges
    D, M = nodes[0].config.data_dim, nodes[0].config.latent_dim
    if not edges:
        return EdgeAuxState([], np.zeros((0, D)), np.ones((0, D)), np.zeros((0, D, M)), np.ones((0, D, M)))
    src = [nodes[i].post for i, _ in edges]
    return EdgeAuxState(edges,
                        np.stack([p.mu_mean for p in src]), np.stack([p.mu_var for p in src]),
                        np.stack([p.w_mean for p in src]), np.stack([p.w_var for p in src]))


def fit_distributed(data, mask, graph: NetworkGraph, partition: DataPartition, config: BpcaModelConfig,
                    solver: SolverConfig, warm_start: DistributedFit | None = None, posts=None) -> DistributedFit:
    """Synchronous B-ADMM rounds (local, auxiliary, dual) until convergence.

    Stops when the relative change of the network objective is below
    ``solver.tol`` and the largest edge gap, relative to the parameter scale,
    is below ``solver.consensus_tol``; or after ``solver.max_iter`` rounds.

    ``warm_start`` reuses auxiliaries and duals of a previous fit; ``posts``
    supplies per-node starting posteriors (sizes must match the partition).
    """
    rng = np.random.default_rng(solver.seed)
    nodes = build_nodes(data, mask, graph, partition, config, rng, posts)
    weight = 1.0 / graph.node_count
    if warm_start is not None:
        aux, duals = warm_start.aux.copy(), warm_start.duals.copy()
    else:
        aux = init_aux(nodes, graph)
        duals = DualState.zeros(len(aux.edges), config.data_dim, config.latent_dim)

    diagnostics: dict = {}
    trace = ConvergenceTrace()
    prev = network_objective(nodes, weight)
    t0 = time.perf_counter()
    for it in range(1, solver.max_iter + 1):
        good = ([n.post.copy() for n in nodes], aux.copy(), duals.copy())
        for node in nodes:
            local_update_phase(node, aux, duals, solver.eta, weight)
        aux = aux_update_phase(nodes, aux, duals, solver.eta, diagnostics)
        duals = dual_update_phase(nodes, aux, duals, solver.eta)
        obj = network_objective(nodes, weight)
        primal, gap = consensus_residual(nodes, aux)
        if not np.isfinite(obj):
            raise DivergenceError(f"non-finite network objective at iteration {it}", state=good, trace=trace)
        trace.append(TraceRow(it, obj, primal, gap, 1e3 * (time.perf_counter() - t0)))
        if bpca.relative_change(obj, prev) < solver.tol and gap / parameter_scale(nodes) <= solver.consensus_tol:
            trace.converged = True
            break
        prev = obj
    for n in nodes:
        for k, v in n.post.diagnostics.items():
            diagnostics[k] = diagnostics.get(k, 0) + v
    log.debug("distributed fit: %d rounds, objective %.6g", trace.iterations, trace.final_objective)
    return DistributedFit(graph, nodes, aux, duals, trace, diagnostics)
