"""Brute-force ground truth for tiny models.

Enumerates every binary configuration (f, g, h), integrating the slabs
and the visibles analytically per configuration, to produce the exact
partition function, posteriors, marginals, and log-likelihood gradients.
Everything runs in the log domain with a fixed reduction order, so
results are reproducible to the last bit.

Configuration indexing: config ci assigns bit b = (ci >> b) & 1 reading
f_0..f_{K-1}, then g in C-order of (M, K), then h in C-order of (N, K).
"""

from dataclasses import dataclass

import numpy as np

from .errors import EnumBudgetError, NotPositiveDefiniteError
from .model import (LOG_2PI, BlockShape, ParamGrad, free_energy_many,
                    gate_product, weight_projections)
from .utils import logsumexp

_CHUNK = 1 << 14


@dataclass(frozen=True)
class EnumBudget:
    """Refusal threshold: K + M*K + N*K binary variables at most."""

    max_binary_vars: int = 20


def check_budget(shape, budget=EnumBudget()):
    n = shape.n_binary
    if n > budget.max_binary_vars:
        raise EnumBudgetError(
            f"enumeration over {n} binary variables exceeds the budget of "
            f"{budget.max_binary_vars}; refusing")
    return 1 << n


def config_bits_at(shape, idx):
    """(f, g, h) float arrays for an array of config indices."""
    K, M, N = shape.K, shape.M, shape.N
    idx = np.asarray(idx, dtype=np.uint64)[:, None]
    shifts = np.arange(shape.n_binary, dtype=np.uint64)[None, :]
    bits = ((idx >> shifts) & np.uint64(1)).astype(np.float64)
    f = bits[:, :K]
    g = bits[:, K:K + M * K].reshape(-1, M, K)
    h = bits[:, K + M * K:].reshape(-1, N, K)
    return f, g, h


def config_bits(shape, start, stop):
    """(f, g, h) float arrays for config indices [start, stop)."""
    return config_bits_at(shape, np.arange(start, stop, dtype=np.uint64))


def config_index(f, g, h):
    """Inverse of config_bits for a single configuration."""
    bits = np.concatenate([np.ravel(f), np.ravel(g), np.ravel(h)])
    return int(sum(int(round(b)) << i for i, b in enumerate(bits)))


def _visible_gaussians(p, rho_flat, start):
    """Per-config visible precision factorizations.

    Returns (chol, m) where chol are Cholesky factors of
    P_c = diag(lam) - W diag(rho_c / alpha) W' and m_c = W (mu rho_c).
    Raises NotPositiveDefiniteError naming the first offending config.
    """
    Wf = p.W.reshape(p.shape.D, -1)
    af = p.alpha.reshape(-1)
    muf = p.mu.reshape(-1)
    P = np.diag(p.lam)[None] - np.einsum(
        'ds,cs,es->cde', Wf, rho_flat / af, Wf)
    m = np.einsum('ds,cs->cd', Wf, muf * rho_flat)
    try:
        chol = np.linalg.cholesky(P)
    except np.linalg.LinAlgError:
        for i in range(P.shape[0]):
            try:
                np.linalg.cholesky(P[i])
            except np.linalg.LinAlgError:
                raise NotPositiveDefiniteError(
                    "visible precision not positive definite for "
                    f"configuration index {start + i}",
                    config=start + i) from None
        raise
    return chol, m


def _log_z_chunk(p, start, stop):
    """log integral exp(-E) ds dv per config in [start, stop)."""
    f, g, h = config_bits(p.shape, start, stop)
    rho_flat = gate_product(f, g, h).reshape(stop - start, -1)
    chol, m = _visible_gaussians(p, rho_flat, start)
    logdet = 2.0 * np.sum(np.log(np.diagonal(chol, axis1=1, axis2=2)), axis=1)
    # quadratic term m' P^-1 m via triangular solve
    sol = np.linalg.solve(chol, m[:, :, None])[:, :, 0]
    quad = np.sum(sol * sol, axis=1)
    bias = f @ p.e - np.einsum('cmk,mk->c', g, p.c) - np.einsum(
        'cnk,nk->c', h, p.d)
    slab_const = 0.5 * np.sum(LOG_2PI - np.log(p.alpha))
    return (bias + slab_const + 0.5 * p.shape.D * LOG_2PI
            - 0.5 * logdet + 0.5 * quad)


def _config_log_weights(p, budget):
    n_conf = check_budget(p.shape, budget)
    out = np.empty(n_conf)
    for start in range(0, n_conf, _CHUNK):
        stop = min(start + _CHUNK, n_conf)
        out[start:stop] = _log_z_chunk(p, start, stop)
    return out


def exact_log_z(p, budget=EnumBudget()):
    """log of the full partition function by enumeration."""
    return float(logsumexp(_config_log_weights(p, budget)))


@dataclass
class ConfigTable:
    """Exact distribution over binary configurations, indexed per
    config_bits ordering."""

    shape: BlockShape
    log_weights: np.ndarray
    probs: np.ndarray

    @classmethod
    def from_log_weights(cls, shape, log_weights):
        log_norm = logsumexp(log_weights)
        return cls(shape=shape, log_weights=log_weights,
                   probs=np.exp(log_weights - log_norm))

    def prob_of(self, f, g, h):
        return float(self.probs[config_index(f, g, h)])

    def unit_marginals(self):
        """Per-unit activation probabilities (f (K,), g (M,K), h (N,K))."""
        K, M, N = self.shape.K, self.shape.M, self.shape.N
        f_m = np.zeros(K)
        g_m = np.zeros((M, K))
        h_m = np.zeros((N, K))
        for start in range(0, self.probs.size, _CHUNK):
            stop = min(start + _CHUNK, self.probs.size)
            f, g, h = config_bits(self.shape, start, stop)
            w = self.probs[start:stop]
            f_m += w @ f
            g_m += np.einsum('c,cmk->mk', w, g)
            h_m += np.einsum('c,cnk->nk', w, h)
        return f_m, g_m, h_m

    def triple_moments(self):
        """E[f_k g_ik h_jk] per triple, shape (M, N, K)."""
        out = np.zeros((self.shape.M, self.shape.N, self.shape.K))
        for start in range(0, self.probs.size, _CHUNK):
            stop = min(start + _CHUNK, self.probs.size)
            f, g, h = config_bits(self.shape, start, stop)
            rho = gate_product(f, g, h)
            out += np.einsum('c,cmnk->mnk', self.probs[start:stop], rho)
        return out

    def sample_configs(self, rng, size):
        """Draw config index samples and return (f, g, h) arrays."""
        idx = rng.choice(self.probs.size, size=size, p=self.probs)
        return config_bits_at(self.shape, idx)


def exact_posterior(v, p, budget=EnumBudget()):
    """P(f,g,h | v) as a ConfigTable; probabilities sum to one."""
    n_conf = check_budget(p.shape, budget)
    logits = np.empty(n_conf)
    for start in range(0, n_conf, _CHUNK):
        stop = min(start + _CHUNK, n_conf)
        f, g, h = config_bits(p.shape, start, stop)
        logits[start:stop] = -free_energy_many(v, f, g, h, p)
    return ConfigTable.from_log_weights(p.shape, logits)


def exact_model_table(p, budget=EnumBudget()):
    """P(f,g,h) under the model (v and s integrated out)."""
    return ConfigTable.from_log_weights(p.shape, _config_log_weights(p, budget))


def exact_loglik(v, p, budget=EnumBudget()):
    """Exact log p(v) by enumeration."""
    n_conf = check_budget(p.shape, budget)
    parts = []
    for start in range(0, n_conf, _CHUNK):
        stop = min(start + _CHUNK, n_conf)
        f, g, h = config_bits(p.shape, start, stop)
        parts.append(logsumexp(-free_energy_many(v, f, g, h, p)))
    # the free energy already carries the Gaussian visible density term,
    # so only the partition function is left to subtract
    return float(logsumexp(np.asarray(parts))) - exact_log_z(p, budget)


# ---------------------------------------------------------------------------
# exact gradient of the log likelihood


def exact_positive_term(v, p, budget=EnumBudget()):
    """E_{P(f,g,h|v)} E_{p(s|v,f,g,h)} [-dE/dtheta], by enumeration.

    Slab moments are analytic: active slabs have mean m_s = alpha^-1 v'W
    + mu and variance alpha^-1, inactive ones mean 0 and the same
    variance.
    """
    table = exact_posterior(v, p, budget)
    v = np.asarray(v, dtype=np.float64)
    tm = table.triple_moments()
    f_m, g_m, h_m = table.unit_marginals()
    y = weight_projections(v, p)
    m_s = y / p.alpha + p.mu
    return ParamGrad(
        W=np.einsum('d,mnk->dmnk', v, m_s * tm),
        mu=y * tm,
        alpha=-0.5 / p.alpha - 0.5 * (y / p.alpha) ** 2 * tm,
        lam=-0.5 * v * v,
        c=-g_m,
        d=-h_m,
        e=f_m,
    )


def exact_negative_term(p, budget=EnumBudget()):
    """E_{p(v,s,f,g,h)} [-dE/dtheta], by enumeration.

    For each configuration the visibles are Gaussian with covariance
    C = P^-1 and mean m_v = C W (mu rho); slab moments follow from
    s | v.  All quadratic expectations use S = C + m_v m_v'.
    """
    n_conf = check_budget(p.shape, budget)
    log_w = _config_log_weights(p, budget)
    w_all = np.exp(log_w - logsumexp(log_w))

    D = p.shape.D
    Wf = p.W.reshape(D, -1)
    af = p.alpha.reshape(-1)
    muf = p.mu.reshape(-1)
    grad_Wf = np.zeros_like(Wf)
    grad_mu = np.zeros_like(muf)
    grad_alpha_rho = np.zeros_like(af)
    grad_lam = np.zeros(D)
    grad_c = np.zeros_like(p.c)
    grad_d = np.zeros_like(p.d)
    grad_e = np.zeros_like(p.e)

    for start in range(0, n_conf, _CHUNK):
        stop = min(start + _CHUNK, n_conf)
        f, g, h = config_bits(p.shape, start, stop)
        w = w_all[start:stop]
        rho = gate_product(f, g, h).reshape(stop - start, -1)
        chol, lin = _visible_gaussians(p, rho, start)
        Linv = np.linalg.inv(chol)
        cov = np.einsum('ced,cef->cdf', Linv, Linv)
        m = np.einsum('cde,ce->cd', cov, lin)
        S = cov + np.einsum('cd,ce->cde', m, m)
        SW = np.einsum('cde,es->cds', S, Wf)
        mW = np.einsum('cd,ds->cs', m, Wf)
        grad_Wf += np.einsum('c,cs,cds->ds', w, rho / af, SW)
        grad_Wf += np.einsum('c,cs,cd->ds', w, rho * muf, m)
        grad_mu += np.einsum('c,cs,cs->s', w, rho, mW)
        grad_alpha_rho += np.einsum('c,cs,cs->s', w, rho,
                                    np.einsum('ds,cds->cs', Wf, SW))
        grad_lam += -0.5 * np.einsum('c,cd->d', w,
                                     np.diagonal(S, axis1=1, axis2=2))
        grad_c += -np.einsum('c,cmk->mk', w, g)
        grad_d += -np.einsum('c,cnk->nk', w, h)
        grad_e += w @ f

    mnk = p.mu.shape
    return ParamGrad(
        W=grad_Wf.reshape(p.W.shape),
        mu=grad_mu.reshape(mnk),
        alpha=-0.5 / p.alpha - 0.5 * grad_alpha_rho.reshape(mnk) / p.alpha ** 2,
        lam=grad_lam,
        c=grad_c,
        d=grad_d,
        e=grad_e,
    )


def exact_loglik_grad(v, p, budget=EnumBudget()):
    """d log p(v) / dtheta: data-dependent term minus model term."""
    return exact_positive_term(v, p, budget) - exact_negative_term(p, budget)


# ---------------------------------------------------------------------------
# exact joint sampling (for transition-kernel tests)


def joint_vs_gaussian(p, f, g, h):
    """Mean and covariance of (v, s) | (f, g, h), s flattened C-order."""
    D = p.shape.D
    S = p.shape.n_slabs
    rho = gate_product(np.asarray(f, float), np.asarray(g, float),
                       np.asarray(h, float)).reshape(-1)
    Wf = p.W.reshape(D, -1)
    prec = np.zeros((D + S, D + S))
    prec[:D, :D] = np.diag(p.lam)
    prec[D:, D:] = np.diag(p.alpha.reshape(-1))
    prec[:D, D:] = -Wf * rho[None, :]
    prec[D:, :D] = prec[:D, D:].T
    lin = np.concatenate([np.zeros(D),
                          (p.alpha * p.mu).reshape(-1) * rho])
    try:
        chol = np.linalg.cholesky(prec)
    except np.linalg.LinAlgError:
        raise NotPositiveDefiniteError(
            "joint (v, s) precision not positive definite for configuration "
            f"index {config_index(f, g, h)}",
            config=(f, g, h)) from None
    Linv = np.linalg.inv(chol)
    cov = Linv.T @ Linv
    mean = cov @ lin
    return mean, 0.5 * (cov + cov.T)


def sample_exact_joint(p, rng, size, budget=EnumBudget()):
    """Exact joint samples (v, f, g, h, s) via config table + Gaussians."""
    table = exact_model_table(p, budget)
    idx = rng.choice(table.probs.size, size=size, p=table.probs)
    D, S = p.shape.D, p.shape.n_slabs
    V = np.empty((size, D))
    Sl = np.empty((size, S))
    F = np.empty((size, p.shape.K))
    G = np.empty((size, p.shape.M, p.shape.K))
    H = np.empty((size, p.shape.N, p.shape.K))
    for ci in np.unique(idx):
        rows = np.nonzero(idx == ci)[0]
        f, g, h = config_bits(p.shape, ci, ci + 1)
        mean, cov = joint_vs_gaussian(p, f[0], g[0], h[0])
        chol = np.linalg.cholesky(cov + 1e-14 * np.eye(cov.shape[0]))
        z = rng.standard_normal((rows.size, D + S))
        draw = mean[None, :] + z @ chol.T
        V[rows] = draw[:, :D]
        Sl[rows] = draw[:, D:]
        F[rows] = f[0]
        G[rows] = g[0]
        H[rows] = h[0]
    return V, F, G, H, Sl.reshape(size, p.shape.M, p.shape.N, p.shape.K)
