"""Seeded verification suites against the brute-force oracle.

Four independent checks, each on freshly drawn tiny models:

1. gradients     exact log-likelihood gradient vs central finite
                 differences, every parameter entry
2. conditionals  cond_f / cond_g / cond_h vs two-point free-energy
                 ratios, every unit
3. gibbs         empirical chain marginals vs enumerated model marginals
4. meanfield     bound monotonicity under undamped stage updates, and
                 marginal accuracy vs exact posteriors at weak coupling

These back the `hossbm verify` subcommand and the acceptance suite.
Tiny models are drawn with slab precisions and filter scales that keep
every configuration's visible precision positive definite, so the
enumeration never hits a PD failure.
"""

from dataclasses import dataclass

import numpy as np

from . import oracle, rng as rngmod
from .gibbs import GibbsConfig, chains_to_arrays, init_chains, \
    step_chain_arrays
from .meanfield import MfConfig, _objective_arrays, mf_infer, signed_biases, \
    update_f_hat, update_g_hat, update_h_hat
from .model import (BlockShape, ModelParams, cond_f, cond_g, cond_h,
                    free_energy, interaction_gain, weight_projections)
from .utils import sigmoid


@dataclass
class CheckResult:
    name: str
    passed: bool
    detail: str

    def line(self):
        status = "PASS" if self.passed else "FAIL"
        return f"{status} {self.name}: {self.detail}"


def random_tiny_model(gen, w_scale=0.25, d_max=3, k_max=2, m_max=2, n_max=2):
    """Random small model; parameter ranges keep all configs PD."""
    shape = BlockShape(D=int(gen.integers(1, d_max + 1)),
                       K=int(gen.integers(1, k_max + 1)),
                       M=int(gen.integers(1, m_max + 1)),
                       N=int(gen.integers(1, n_max + 1)))
    D, K, M, N = shape.D, shape.K, shape.M, shape.N
    return ModelParams(
        shape,
        W=gen.normal(0, w_scale, (D, M, N, K)),
        mu=gen.uniform(1.0, 1.5, (M, N, K)),
        alpha=gen.uniform(2.0, 4.0, (M, N, K)),
        lam=gen.uniform(1.5, 2.5, D),
        c=gen.normal(0, 0.5, (M, K)),
        d=gen.normal(0, 0.5, (N, K)),
        e=gen.normal(0, 0.5, K))


def check_gradients(seed=0, n_models=20, tol=1e-5, fd_step=1e-4):
    """Criterion: exact_loglik_grad vs central finite differences.

    The reference derivative is Richardson-extrapolated central
    differences, (4 d(h) - d(2h)) / 3, which floors the estimator noise
    near 1e-11; the relative-error denominator is floored at 1e-4 so
    that entries at the finite-difference resolution limit are compared
    absolutely rather than amplified.
    """
    gen = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(n_models):
        p = random_tiny_model(gen)
        v = gen.normal(0, 1, p.shape.D)
        grad = oracle.exact_loglik_grad(v, p)
        for name, arr in p.arrays():
            ga = getattr(grad, name)
            it = np.nditer(arr, flags=['multi_index'])
            for _ in it:
                ix = it.multi_index
                orig = arr[ix]

                def central(h):
                    arr[ix] = orig + h
                    lp = oracle.exact_loglik(v, p)
                    arr[ix] = orig - h
                    lm = oracle.exact_loglik(v, p)
                    arr[ix] = orig
                    return (lp - lm) / (2 * h)

                fd = (4.0 * central(fd_step) - central(2 * fd_step)) / 3.0
                denom = max(abs(fd), abs(ga[ix]), 1e-4)
                worst = max(worst, abs(fd - ga[ix]) / denom)
    return CheckResult(
        name="oracle gradient equivalence",
        passed=worst <= tol,
        detail=f"worst relative error {worst:.3e} over {n_models} models "
               f"(tolerance {tol:g})")


def _ratio_from_free_energy(v, p, f, g, h, which, idx):
    """P(unit = 1 | rest) from the two free energies of flipping it."""
    cfg = {"f": f.copy(), "g": g.copy(), "h": h.copy()}
    cfg[which][idx] = 1.0
    F1 = free_energy(v, cfg["f"], cfg["g"], cfg["h"], p)
    cfg[which][idx] = 0.0
    F0 = free_energy(v, cfg["f"], cfg["g"], cfg["h"], p)
    return sigmoid(np.asarray(F0 - F1))


def check_conditionals(seed=0, n_models=20, tol=1e-10, rest_draws=3):
    """Criterion: conditionals agree with free-energy two-point ratios."""
    gen = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(n_models):
        p = random_tiny_model(gen)
        v = gen.normal(0, 1, p.shape.D)
        K, M, N = p.shape.K, p.shape.M, p.shape.N
        for _ in range(rest_draws):
            f = (gen.random(K) < 0.5).astype(np.float64)
            g = (gen.random((M, K)) < 0.5).astype(np.float64)
            h = (gen.random((N, K)) < 0.5).astype(np.float64)
            pf = cond_f(v, g, h, p)
            for k in range(K):
                ref = _ratio_from_free_energy(v, p, f, g, h, "f", k)
                worst = max(worst, abs(pf[k] - ref))
            pg = cond_g(v, f, h, p)
            for i in range(M):
                for k in range(K):
                    ref = _ratio_from_free_energy(v, p, f, g, h, "g", (i, k))
                    worst = max(worst, abs(pg[i, k] - ref))
            ph = cond_h(v, f, g, p)
            for j in range(N):
                for k in range(K):
                    ref = _ratio_from_free_energy(v, p, f, g, h, "h", (j, k))
                    worst = max(worst, abs(ph[j, k] - ref))
    return CheckResult(
        name="conditional correctness",
        passed=worst <= tol,
        detail=f"worst |conditional - free-energy ratio| {worst:.3e} over "
               f"{n_models} models (tolerance {tol:g})")


def check_gibbs(seed=0, sweeps=100_000, burn_in=2_000, n_chains=10,
                tv_tol=0.02):
    """Criterion: post-burn-in chain marginals vs oracle model marginals."""
    gen = np.random.default_rng(seed)
    p = random_tiny_model(gen)
    fm, gm, hm = oracle.exact_model_table(p).unit_marginals()
    cfg = GibbsConfig(n_chains=n_chains, steps_per_update=1, seed=seed)
    chains = init_chains(p, cfg)
    V, F, G, H, S = chains_to_arrays(chains)
    rngs = [rngmod.stream(cfg.seed, ch.rng_stream_id, counter=0)
            for ch in chains]
    keep = sweeps // n_chains
    fa = np.zeros_like(fm)
    ga = np.zeros_like(gm)
    ha = np.zeros_like(hm)
    for t in range(burn_in + keep):
        V, F, G, H, S = step_chain_arrays(V, F, G, H, S, p, rngs)
        if t >= burn_in:
            fa += F.mean(axis=0)
            ga += G.mean(axis=0)
            ha += H.mean(axis=0)
    fa /= keep
    ga /= keep
    ha /= keep
    tv = max(np.max(np.abs(fa - fm)), np.max(np.abs(ga - gm)),
             np.max(np.abs(ha - hm)))
    return CheckResult(
        name="gibbs fidelity",
        passed=tv <= tv_tol,
        detail=f"max per-unit total variation {tv:.4f} after "
               f"{n_chains}x{keep} sweeps (tolerance {tv_tol:g})")


def check_meanfield(seed=0, n_instances=20, sweeps=10, slack=1e-9,
                    tv_tol=0.05, min_frac=0.9, w_scale=0.1):
    """Criterion: stage-update monotonicity and marginal accuracy."""
    gen = np.random.default_rng(seed)
    worst_drop = 0.0
    n_ok = 0
    worst_tv = 0.0
    for _ in range(n_instances):
        p = random_tiny_model(gen, w_scale=w_scale)
        v = gen.normal(0, 1, p.shape.D)
        K, M, N = p.shape.K, p.shape.M, p.shape.N
        # undamped stage updates from the uninformative state
        T = interaction_gain(weight_projections(v[None, :], p), p)
        eb, cb, db = signed_biases(p, "energy")
        f_hat = np.full((1, K), 0.5)
        g_hat = np.full((1, M, K), 0.5)
        h_hat = np.full((1, N, K), 0.5)
        prev = _objective_arrays(v[None, :], f_hat, g_hat, h_hat, p)[0]
        for _ in range(sweeps):
            f_hat = update_f_hat(T, g_hat, h_hat, eb)
            cur = _objective_arrays(v[None, :], f_hat, g_hat, h_hat, p)[0]
            worst_drop = max(worst_drop, prev - cur)
            prev = cur
            g_hat = update_g_hat(T, h_hat, f_hat, cb)
            cur = _objective_arrays(v[None, :], f_hat, g_hat, h_hat, p)[0]
            worst_drop = max(worst_drop, prev - cur)
            prev = cur
            h_hat = update_h_hat(T, g_hat, f_hat, db)
            cur = _objective_arrays(v[None, :], f_hat, g_hat, h_hat, p)[0]
            worst_drop = max(worst_drop, prev - cur)
            prev = cur
        # converged marginals vs exact posterior
        st = mf_infer(v, p, MfConfig(tol=1e-9, max_sweeps=500))
        fm, gm, hm = oracle.exact_posterior(v, p).unit_marginals()
        tv = max(np.max(np.abs(st.f_hat - fm)), np.max(np.abs(st.g_hat - gm)),
                 np.max(np.abs(st.h_hat - hm)))
        worst_tv = max(worst_tv, tv)
        n_ok += tv <= tv_tol
    frac = n_ok / n_instances
    passed = worst_drop <= slack and frac >= min_frac
    return CheckResult(
        name="mean-field soundness",
        passed=passed,
        detail=f"worst objective drop {worst_drop:.2e} (slack {slack:g}); "
               f"{n_ok}/{n_instances} instances within TV {tv_tol:g} "
               f"(worst {worst_tv:.4f}, need {min_frac:.0%})")


def run_all(seed=0, quick=False):
    """The four suites; `quick` shrinks counts for a fast smoke pass."""
    if quick:
        return [
            check_gradients(seed, n_models=3),
            check_conditionals(seed, n_models=3),
            check_gibbs(seed, sweeps=20_000, burn_in=500),
            check_meanfield(seed, n_instances=5),
        ]
    return [
        check_gradients(seed),
        check_conditionals(seed),
        check_gibbs(seed),
        check_meanfield(seed),
    ]
