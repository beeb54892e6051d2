"""Stochastic maximum-likelihood training.

Each update combines a mean-field positive phase on a data minibatch
with a persistent-chain Gibbs negative phase, takes an SGD step in the
direction (positive - negative), and re-projects the parameters onto
their constraint set: unit-norm filters, slab means >= mu_min, slab and
visible precisions inside their configured bounds.

All randomness (parameter init, shuffling, chain moves) comes from
counter-based streams keyed by the seeds in TrainConfig, so a run is a
pure function of (data, shape, config) and can be resumed bit-exactly
from a checkpoint taken at an epoch boundary.
"""

from dataclasses import dataclass, field, replace

import numpy as np

from . import rng as rngmod
from .errors import TrainingError
from .gibbs import GibbsConfig, chains_to_arrays, init_chains, run_chains
from .meanfield import MfConfig, mf_infer_batch
from .model import (BlockShape, ModelParams, ParamGrad, gate_product,
                    weight_projections)


@dataclass(frozen=True)
class TrainConfig:
    lr: float = 1e-3
    lr_decay: float = 1.0          # multiplicative per epoch
    epochs: int = 1
    minibatch: int = 32
    mf: MfConfig = MfConfig()
    gibbs: GibbsConfig = GibbsConfig()
    mu_min: float = 1.0
    alpha_min: float = 0.1
    alpha_max: float = 100.0
    lambda_min: float = 0.01
    learn_lambda: bool = False
    seed: int = 0
    clamp_f: bool = False          # hold all block gates at 1 (bilinear mode)
    chain_init: str = "data"       # or "noise"
    check_invariants: bool = True

    def __post_init__(self):
        if self.lr <= 0:
            raise ValueError("lr must be > 0")
        if not self.alpha_min <= self.alpha_max:
            raise ValueError("alpha bounds out of order")
        if self.chain_init not in ("data", "noise"):
            raise ValueError(f"unknown chain_init {self.chain_init!r}")


# ---------------------------------------------------------------------------
# gradient estimators


def positive_stats_from_moments(V, f_m, g_m, h_m, triple_m, p):
    """Data term of the gradient from spike moments.

    The expected -dE/dtheta under any distribution over (f, g, h) times
    the conditional slab Gaussian depends on that distribution only
    through the unit marginals and the triple moments E[f_k g_ik h_jk];
    for factorial Q the triple moment is the product of marginals.
    """
    V = np.atleast_2d(np.asarray(V, dtype=np.float64))
    n = V.shape[0]
    y = weight_projections(V, p)
    m_s = y / p.alpha + p.mu
    act = triple_m * m_s
    return ParamGrad(
        W=np.einsum('bd,bmnk->dmnk', V, act) / n,
        mu=np.mean(y * triple_m, axis=0),
        alpha=-0.5 / p.alpha - 0.5 * np.mean(
            triple_m * (y / p.alpha) ** 2, axis=0),
        lam=-0.5 * np.mean(V * V, axis=0),
        c=-np.mean(g_m, axis=0),
        d=-np.mean(h_m, axis=0),
        e=np.mean(f_m, axis=0),
    )


def positive_stats(V, p, mf_cfg=MfConfig(), clamp_f=False):
    """Mean-field positive phase averaged over a batch of visibles."""
    V = np.atleast_2d(np.asarray(V, dtype=np.float64))
    if V.shape[0] == 0:
        raise ValueError("positive_stats requires a nonempty batch")
    q = mf_infer_batch(V, p, mf_cfg, clamp_f=clamp_f)
    triple = q.f_hat[:, None, None, :] * q.g_hat[:, :, None, :] \
        * q.h_hat[:, None, :, :]
    return positive_stats_from_moments(V, q.f_hat, q.g_hat, q.h_hat,
                                       triple, p)


def negative_stats(chains, p, weights=None):
    """Model term of the gradient: -dE/dtheta averaged over chain states.

    `weights` (optional, must sum to 1) allows weighted averaging, e.g.
    over enumeration- or quadrature-derived state sets.
    """
    V, F, G, H, S = chains_to_arrays(chains)
    n = V.shape[0]
    w = np.full(n, 1.0 / n) if weights is None else \
        np.asarray(weights, dtype=np.float64)
    rho = gate_product(F, G, H)
    s_act = S * rho
    return ParamGrad(
        W=np.einsum('c,cd,cmnk->dmnk', w, V, s_act),
        mu=np.einsum('c,cmnk->mnk', w, p.alpha * (S - p.mu) * rho),
        alpha=np.einsum('c,cmnk->mnk', w,
                        -0.5 * S * S + (p.mu * S - 0.5 * p.mu ** 2) * rho),
        lam=np.einsum('c,cd->d', w, -0.5 * V * V),
        c=-np.einsum('c,cmk->mk', w, G),
        d=-np.einsum('c,cnk->nk', w, H),
        e=np.einsum('c,ck->k', w, F),
    )


# ---------------------------------------------------------------------------
# parameter updates


def apply_update(p, grad, cfg, lr=None):
    """SGD step followed by the constraint projections, in fixed order:
    filter renormalization, then mu / alpha / lambda clamps."""
    if not grad.is_finite():
        raise TrainingError("non-finite gradient; update aborted")
    lr = cfg.lr if lr is None else lr
    W = p.W + lr * grad.W
    norms = np.sqrt(np.sum(W * W, axis=0))
    if np.any(norms == 0):
        raise TrainingError("filter collapsed to zero norm; cannot project")
    W = W / norms[None, :, :, :]
    mu = np.maximum(p.mu + lr * grad.mu, cfg.mu_min)
    alpha = np.clip(p.alpha + lr * grad.alpha, cfg.alpha_min, cfg.alpha_max)
    if cfg.learn_lambda:
        lam = np.maximum(p.lam + lr * grad.lam, cfg.lambda_min)
    else:
        lam = p.lam.copy()
    return ModelParams(p.shape, W=W, mu=mu, alpha=alpha, lam=lam,
                       c=p.c + lr * grad.c, d=p.d + lr * grad.d,
                       e=p.e + lr * grad.e)


def param_invariant_violations(p, cfg, norm_tol=1e-6):
    """Constraint violations after an update; empty list when clean."""
    out = []
    norms = np.sqrt(np.sum(p.W * p.W, axis=0))
    if np.max(np.abs(norms - 1.0)) > norm_tol:
        out.append(f"filter norm off unit by {np.max(np.abs(norms - 1.0)):g}")
    if np.min(p.mu) < cfg.mu_min - 1e-12:
        out.append(f"mu below {cfg.mu_min}: {np.min(p.mu):g}")
    if np.min(p.alpha) < cfg.alpha_min - 1e-12 \
            or np.max(p.alpha) > cfg.alpha_max + 1e-12:
        out.append("alpha outside bounds")
    if np.min(p.lam) < cfg.lambda_min - 1e-12:
        out.append(f"lambda below {cfg.lambda_min}: {np.min(p.lam):g}")
    return out


def init_params(shape, data, cfg):
    """Initial parameters: small random unit-norm filters, slab means at
    the mu floor, moderate slab precision, visible precision from the
    per-pixel data variance, mildly sparse block gates."""
    gen = rngmod.stream(cfg.seed, rngmod.STREAM_INIT)
    W = gen.normal(0.0, 0.01, size=(shape.D, shape.M, shape.N, shape.K))
    norms = np.sqrt(np.sum(W * W, axis=0))
    W = W / norms[None, :, :, :]
    var = np.var(np.asarray(data, dtype=np.float64), axis=0)
    lam = np.clip(1.0 / np.maximum(var, 1e-12), cfg.lambda_min, 1e12)
    return ModelParams(
        shape, W=W,
        mu=np.full((shape.M, shape.N, shape.K), max(1.0, cfg.mu_min)),
        alpha=np.full((shape.M, shape.N, shape.K),
                      float(np.clip(10.0, cfg.alpha_min, cfg.alpha_max))),
        lam=lam,
        c=np.zeros((shape.M, shape.K)), d=np.zeros((shape.N, shape.K)),
        e=np.full(shape.K, -1.0))


# ---------------------------------------------------------------------------
# the training loop


@dataclass
class TrainLog:
    """Per-epoch scalars, one row per completed epoch."""

    columns = ("epoch", "recon_mse", "mf_mean_sweeps", "grad_norm", "lr")
    rows: list = field(default_factory=list)

    def append(self, **kw):
        self.rows.append(tuple(kw[c] for c in self.columns))

    def write_csv(self, path, header_lines=()):
        with open(path, "w") as fh:
            for line in header_lines:
                fh.write(f"# {line}\n")
            fh.write(",".join(self.columns) + "\n")
            for row in self.rows:
                fh.write(",".join(repr(x) for x in row) + "\n")


@dataclass
class TrainState:
    """Everything needed to continue a run from an epoch boundary."""

    params: ModelParams
    chains: list
    center: np.ndarray
    epoch: int
    update_counter: int
    lr: float
    log: TrainLog


def reconstruction_mse(V, p, mf_cfg=MfConfig(), clamp_f=False):
    """Per-pixel squared error of E[v | mean-field code] against V."""
    V = np.atleast_2d(np.asarray(V, dtype=np.float64))
    q = mf_infer_batch(V, p, mf_cfg, clamp_f=clamp_f)
    vhat = np.einsum('dmnk,bmnk->bd', p.W, q.s_hat) / p.lam
    return float(np.mean((V - vhat) ** 2)), float(np.mean(q.sweeps))


def init_train_state(data, shape, cfg):
    """Center the data, draw initial parameters and negative chains."""
    data = np.asarray(data, dtype=np.float64)
    center = data.mean(axis=0)
    centered = data - center
    p = init_params(shape, centered, cfg)
    chain_data = centered if cfg.chain_init == "data" else None
    chains = init_chains(p, cfg.gibbs, data=chain_data)
    return TrainState(params=p, chains=chains, center=center, epoch=0,
                      update_counter=0, lr=cfg.lr, log=TrainLog())


def run_epochs(state, data, cfg, until=None):
    """Advance training to epoch `until` (default cfg.epochs) in place."""
    data = np.asarray(data, dtype=np.float64)
    centered = data - state.center
    n = centered.shape[0]
    until = cfg.epochs if until is None else until
    while state.epoch < until:
        order = rngmod.stream(cfg.seed, rngmod.STREAM_SHUFFLE,
                              counter=state.epoch).permutation(n)
        sweep_counts = []
        grad_norms = []
        for lo in range(0, n, cfg.minibatch):
            batch = centered[order[lo:lo + cfg.minibatch]]
            q = mf_infer_batch(batch, state.params, cfg.mf,
                               clamp_f=cfg.clamp_f)
            sweep_counts.append(float(np.mean(q.sweeps)))
            triple = q.f_hat[:, None, None, :] * q.g_hat[:, :, None, :] \
                * q.h_hat[:, None, :, :]
            pos = positive_stats_from_moments(
                batch, q.f_hat, q.g_hat, q.h_hat, triple, state.params)
            state.chains = run_chains(state.chains, state.params, cfg.gibbs,
                                      t=state.update_counter,
                                      clamp_f=cfg.clamp_f)
            neg = negative_stats(state.chains, state.params)
            grad = pos - neg
            grad_norms.append(grad.norm())
            state.params = apply_update(state.params, grad, cfg, lr=state.lr)
            state.update_counter += 1
            if cfg.check_invariants:
                bad = param_invariant_violations(state.params, cfg)
                if bad:
                    raise TrainingError(
                        "invariant violated after update "
                        f"{state.update_counter}: " + "; ".join(bad))
        recon, _ = reconstruction_mse(centered[:min(n, 1024)], state.params,
                                      cfg.mf, clamp_f=cfg.clamp_f)
        state.epoch += 1
        state.log.append(epoch=state.epoch, recon_mse=recon,
                         mf_mean_sweeps=float(np.mean(sweep_counts)),
                         grad_norm=float(np.mean(grad_norms)),
                         lr=state.lr)
        state.lr *= cfg.lr_decay
    return state


def train(data, shape, cfg):
    """Full run from scratch; returns the final TrainState."""
    state = init_train_state(data, shape, cfg)
    return run_epochs(state, data, cfg)
