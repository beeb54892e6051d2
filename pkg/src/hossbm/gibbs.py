"""Block Gibbs transition kernel and persistent chain management.

One step resamples, in order, f | v,g,h, then g | v,f,h, then
h | v,f,g, then s | v,f,g,h, and finally v | s,f,g,h, each stage in
parallel across its units.  Chains draw from counter-based per-chain
streams (see rng.stream), so trajectories depend only on
(seed, chain id, update counter) -- never on how many chains run or in
what order they are advanced.

Per-chain draw order within one step: K uniforms for f (skipped when the
block gates are clamped), M*K for g, N*K for h, M*N*K standard normals
for s, D standard normals for v.
"""

from dataclasses import dataclass

import numpy as np

from . import rng as rngmod
from .model import (LatentSample, gate_product, interaction_gain,
                    pooled_gain_f, pooled_gain_g, pooled_gain_h,
                    weight_projections)
from .utils import sigmoid


@dataclass(frozen=True)
class GibbsConfig:
    n_chains: int = 64
    steps_per_update: int = 1
    seed: int = 0

    def __post_init__(self):
        if self.n_chains < 1:
            raise ValueError("n_chains must be >= 1")
        if self.steps_per_update < 0:
            raise ValueError("steps_per_update must be >= 0")


@dataclass
class ChainState:
    x: LatentSample
    v: np.ndarray
    rng_stream_id: int

    def copy(self):
        return ChainState(self.x.copy(), self.v.copy(), self.rng_stream_id)


def step_chain_arrays(V, F, G, H, S, p, rngs, clamp_f=False):
    """One Gibbs sweep for a batch of chains; rngs[i] drives chain i.

    Math is vectorized across chains; random draws come from each
    chain's own generator so results are independent of batch layout.
    """
    n = V.shape[0]
    y = weight_projections(V, p)
    T = interaction_gain(y, p)

    if clamp_f:
        F = np.ones_like(F)
    else:
        pf = sigmoid(p.e[None, :] + pooled_gain_f(T, G, H))
        u = np.stack([r.random(p.shape.K) for r in rngs])
        F = (u < pf).astype(np.float64)

    pg = sigmoid(-p.c[None, :, :] + pooled_gain_g(T, H, F))
    u = np.stack([r.random((p.shape.M, p.shape.K)) for r in rngs])
    G = (u < pg).astype(np.float64)

    ph = sigmoid(-p.d[None, :, :] + pooled_gain_h(T, G, F))
    u = np.stack([r.random((p.shape.N, p.shape.K)) for r in rngs])
    H = (u < ph).astype(np.float64)

    rho = gate_product(F, G, H)
    s_mean = (y / p.alpha + p.mu) * rho
    z = np.stack([r.standard_normal((p.shape.M, p.shape.N, p.shape.K))
                  for r in rngs])
    S = s_mean + z / np.sqrt(p.alpha)

    v_mean = np.einsum('dmnk,cmnk->cd', p.W, S * rho) / p.lam
    z = np.stack([r.standard_normal(p.shape.D) for r in rngs])
    V = v_mean + z / np.sqrt(p.lam)
    return V, F, G, H, S


def gibbs_step(chain, p, rng, clamp_f=False):
    """Advance a single chain one full sweep using the given generator."""
    x = chain.x
    V, F, G, H, S = step_chain_arrays(
        chain.v[None, :], x.f[None, :], x.g[None, :, :], x.h[None, :, :],
        x.s[None, :, :, :], p, [rng], clamp_f=clamp_f)
    return ChainState(x=LatentSample(f=F[0], g=G[0], h=H[0], s=S[0]),
                      v=V[0], rng_stream_id=chain.rng_stream_id)


def init_chains(p, cfg, data=None):
    """Fresh chains: data-clamped visibles when `data` is given, else
    diagonal-Gaussian noise at the model's visible scale.  Latents start
    at zero; the first sweep resamples them from their conditionals."""
    out = []
    noise_rng = rngmod.stream(cfg.seed, rngmod.STREAM_CHAIN_INIT)
    for i in range(cfg.n_chains):
        if data is not None:
            v = np.array(data[i % len(data)], dtype=np.float64)
        else:
            v = noise_rng.standard_normal(p.shape.D) / np.sqrt(p.lam)
        out.append(ChainState(x=LatentSample.zeros(p.shape), v=v,
                              rng_stream_id=i))
    return out


def chains_to_arrays(chains):
    V = np.stack([c.v for c in chains])
    F = np.stack([c.x.f for c in chains])
    G = np.stack([c.x.g for c in chains])
    H = np.stack([c.x.h for c in chains])
    S = np.stack([c.x.s for c in chains])
    return V, F, G, H, S


def run_chains(chains, p, cfg, t=0, clamp_f=False):
    """Advance every chain cfg.steps_per_update sweeps at update time t.

    Chain i draws from the (cfg.seed, chain.rng_stream_id) stream with
    counter t, so repeated calls with increasing t continue persistent
    chains reproducibly; steps_per_update = 0 returns copies unchanged.
    """
    if cfg.steps_per_update == 0:
        return [c.copy() for c in chains]
    V, F, G, H, S = chains_to_arrays(chains)
    rngs = [rngmod.stream(cfg.seed, c.rng_stream_id, counter=t)
            for c in chains]
    for _ in range(cfg.steps_per_update):
        V, F, G, H, S = step_chain_arrays(V, F, G, H, S, p, rngs,
                                          clamp_f=clamp_f)
    return [ChainState(x=LatentSample(f=F[i], g=G[i], h=H[i], s=S[i]),
                       v=V[i], rng_stream_id=chains[i].rng_stream_id)
            for i in range(len(chains))]
