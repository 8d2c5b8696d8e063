"""Independent numeric oracles.

Golden-section checks of the distributed solver's closed-form scalar
updates: each perturbs one coordinate of the relevant augmented Lagrangian
(evaluated in full by ``node_lagrangian`` / ``aux_lagrangian``), minimizes it
over the same admissible set the update uses, and returns the absolute
differences to the closed-form result.

A Monte-Carlo ELBO estimate scored directly with scipy densities.
"""
import numpy as np
from scipy import stats

from dmfvi import badmm, bpca
from dmfvi.expfam import VARIANCE_FLOOR

from conftest import golden_log, golden_section

BRACKET = 50.0
XTOL = 1e-8    # bracket width; two orders below the 1e-6 acceptance tolerance


def _box(upper):
    return float(np.clip(upper, 2 * VARIANCE_FLOOR, badmm.VARIANCE_CEILING))


def node_update_errors(nodes, aux, duals, eta, weight, node_idx, entries):
    """Errors of (m_mu, v_mu, m_w, v_w) updates at node ``node_idx`` for ``entries`` rows.

    ``entries`` is a list of (d, m) pairs; the mu checks use each distinct row d.  Leaves
    the node updated (mu then all W columns) as the local phase would.
    """
    node = nodes[node_idx]
    post, cfg = node.post, node.config
    terms = badmm.node_terms(node, aux, duals)
    hyp = bpca.hyper_moments(post, cfg)
    bpca.update_latents(node.X0, node.maskf, post, hyp.tau)
    cap = badmm.PENALIZED_VARIANCE_CAP if node.penalty_count else np.inf
    base = post.copy()

    def lag(attr, idx, value, state):
        # evaluate on ``state`` with one coordinate replaced, restoring it afterwards
        saved_post, arr = node.post, getattr(state, attr)
        old = arr[idx]
        node.post, arr[idx] = state, value
        try:
            return badmm.node_lagrangian(node, aux, duals, eta, weight, terms)
        finally:
            node.post, arr[idx] = saved_post, old

    badmm.node_mu_update(node, terms, hyp, eta, weight)
    errs = {"m_mu": [], "v_mu": [], "m_w": [], "v_w": []}
    rows = sorted({d for d, _ in entries})
    for d in rows:
        m = golden_section(lambda x: lag("mu_mean", d, x, base), -BRACKET, BRACKET, xtol=XTOL)
        errs["m_mu"].append(abs(m - post.mu_mean[d]))
    state = base.copy()
    state.mu_mean = post.mu_mean.copy()
    upper_mu = _box(min(1.0 / hyp.theta, cap))
    for d in rows:
        v = golden_log(lambda x: lag("mu_var", d, x, state), VARIANCE_FLOOR, upper_mu, xtol=XTOL)
        errs["v_mu"].append(abs(v - post.mu_var[d]))
    state.mu_var = post.mu_var.copy()

    C, b = bpca.w_statistics(node.X0, node.maskf, post)
    for col in range(cfg.latent_dim):
        before = post.copy()
        badmm.node_w_update(node, terms, hyp, C, b, col, eta, weight)
        upper_w = _box(min(1.0 / hyp.alpha[col], cap))
        after_mean = before.copy()
        after_mean.w_mean[:, col] = post.w_mean[:, col]
        for d, m_ in entries:
            if m_ != col:
                continue
            w = golden_section(lambda x: lag("w_mean", (d, col), x, before), -BRACKET, BRACKET, xtol=XTOL)
            errs["m_w"].append(abs(w - post.w_mean[d, col]))
            v = golden_log(lambda x: lag("w_var", (d, col), x, after_mean), VARIANCE_FLOOR, upper_w, xtol=XTOL)
            errs["v_w"].append(abs(v - post.w_var[d, col]))
    return errs


def aux_update_errors(nodes, aux, duals, eta, entries):
    """Errors of (rho, phi) updates for the (edge, kind, index) triples in ``entries``."""
    new = badmm.aux_update_phase(nodes, aux, duals, eta)
    cap_mu, cap_w = badmm.prior_variances(nodes)
    errs = {"rho": [], "phi": []}
    work = aux.copy()
    for k, kind, idx in entries:
        i, j = aux.edges[k]
        rho_attr, phi_attr = f"rho_{kind}", f"phi_{kind}"
        full = (k,) + tuple(np.atleast_1d(idx))

        def lag(attr, value, state):
            arr = getattr(state, attr)
            old = arr[full]
            arr[full] = value
            try:
                return badmm.aux_lagrangian(nodes, state, duals, eta)
            finally:
                arr[full] = old

        r = golden_section(lambda x: lag(rho_attr, x, work), -BRACKET, BRACKET, xtol=XTOL)
        errs["rho"].append(abs(r - getattr(new, rho_attr)[full]))
        state = aux.copy()
        getattr(state, rho_attr)[full] = getattr(new, rho_attr)[full]
        if kind == "mu":
            upper = max(cap_mu[i], cap_mu[j])
        else:
            upper = max(cap_w[i][idx[1]], cap_w[j][idx[1]])
        upper = _box(min(upper, badmm.PENALIZED_VARIANCE_CAP))
        p = golden_log(lambda x: lag(phi_attr, x, state), VARIANCE_FLOOR, upper, xtol=XTOL)
        errs["phi"].append(abs(p - getattr(new, phi_attr)[full]))
    return errs


def mc_elbo(X, mask, post, config, n_samples, rng, chunk=100_000):
    """Monte-Carlo estimate of E_q[log p(X, Z, mu, W, tau, alpha, theta) - log q].

    Samples every factor of q independently and scores the generative model
    with scipy densities.  Returns ``(mean, standard_error)``.
    """
    X = np.asarray(X, dtype=float)
    mask = np.ones(X.shape, bool) if mask is None else np.asarray(mask, bool)
    D, M, N = post.shape
    chol = np.linalg.cholesky(post.z_cov)                                  # N x M x M
    total, total_sq, done = 0.0, 0.0, 0
    while done < n_samples:
        S = min(chunk, n_samples - done)
        z = post.z_mean + np.einsum("nmk,snk->snm", chol, rng.standard_normal((S, N, M)))
        mu = post.mu_mean + np.sqrt(post.mu_var) * rng.standard_normal((S, D))
        W = post.w_mean + np.sqrt(post.w_var) * rng.standard_normal((S, D, M))
        gam = {}
        for name in ("tau", "alpha", "theta"):
            q = getattr(post, name)
            gam[name] = rng.gamma(q.shape, 1.0 / q.rate, size=(S,) + q.shape.shape)
        tau, alpha, theta = gam["tau"], gam["alpha"], gam["theta"]

        mean = np.einsum("sdm,snm->sdn", W, z) + mu[:, :, None]
        loglik = stats.norm.logpdf(X[None], mean, 1.0 / np.sqrt(tau)[:, None, None])
        logp = np.sum(np.where(mask[None], loglik, 0.0), axis=(1, 2))
        logp += np.sum(stats.norm.logpdf(z), axis=(1, 2))
        logp += np.sum(stats.norm.logpdf(mu, config.prior_mean_mu, 1.0 / np.sqrt(theta)[:, None]), axis=1)
        logp += np.sum(stats.norm.logpdf(W, config.prior_mean_w, 1.0 / np.sqrt(alpha)[:, None, :]), axis=(1, 2))
        logp += stats.gamma.logpdf(tau, config.a_tau, scale=1.0 / config.b_tau)
        logp += np.sum(stats.gamma.logpdf(alpha, config.a_alpha, scale=1.0 / config.b_alpha), axis=1)
        logp += stats.gamma.logpdf(theta, config.a_theta, scale=1.0 / config.b_theta)

        logq = sum(stats.multivariate_normal.logpdf(z[:, n], post.z_mean[n], post.z_cov[n]) for n in range(N))
        logq = logq + np.sum(stats.norm.logpdf(mu, post.mu_mean, np.sqrt(post.mu_var)), axis=1)
        logq += np.sum(stats.norm.logpdf(W, post.w_mean, np.sqrt(post.w_var)), axis=(1, 2))
        for name, x in gam.items():
            q = getattr(post, name)
            lq = stats.gamma.logpdf(x, q.shape, scale=1.0 / q.rate)
            logq += lq if lq.ndim == 1 else np.sum(lq, axis=1)

        f = logp - logq
        total += f.sum()
        total_sq += np.sum(f ** 2)
        done += S
    m = total / n_samples
    var = total_sq / n_samples - m ** 2
    return m, np.sqrt(var / n_samples)
