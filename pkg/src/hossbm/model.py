"""Core model: parameters, energy, exact conditionals, energy gradients.

The model couples a real visible vector v (dimension D) to binary spikes
arranged in K blocks -- a block gate f_k, row spikes g_{ik} (i < M),
column spikes h_{jk} (j < N) -- plus one real slab s_{ijk} per
(row, column, block) triple.  The energy is

    E(v,s,f,g,h) = 1/2 v'Lam v - sum_k e_k f_k + sum_ik c_ik g_ik
                   + sum_jk d_jk h_jk + 1/2 sum_ijk alpha_ijk s_ijk^2
                   + sum_ijk (-v'W_ijk s_ijk - alpha_ijk mu_ijk s_ijk
                              + 1/2 alpha_ijk mu_ijk^2) g_ik h_jk f_k

so a triple contributes its filter W_{.ijk} scaled by s_{ijk} to the
visible mean only when all three of its gates are on.

All operations are pure functions of their inputs; ModelParams is never
mutated, so one parameter object can be shared across threads.
"""

from dataclasses import dataclass

import numpy as np

from .errors import NotPositiveDefiniteError
from .utils import sigmoid

LOG_2PI = float(np.log(2.0 * np.pi))


@dataclass(frozen=True)
class BlockShape:
    """Tensor dimensions: D visible units, K blocks of M x N spike pairs."""

    D: int
    K: int
    M: int
    N: int

    def __post_init__(self):
        for name in ("D", "K", "M", "N"):
            if getattr(self, name) < 1:
                raise ValueError(f"BlockShape.{name} must be >= 1")

    @property
    def n_binary(self):
        return self.K + self.M * self.K + self.N * self.K

    @property
    def n_slabs(self):
        return self.M * self.N * self.K


def _as_tensor(x, shape, name):
    arr = np.ascontiguousarray(x, dtype=np.float64)
    if arr.shape != shape:
        raise ValueError(f"{name} has shape {arr.shape}, expected {shape}")
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} contains non-finite entries")
    return arr


@dataclass
class ModelParams:
    """All learnable tensors.

    W     (D, M, N, K)  filter vectors, one per (row, column, block) triple
    mu    (M, N, K)     slab means
    alpha (M, N, K)     slab precisions (> 0)
    lam   (D,)          diagonal of the visible precision matrix (> 0)
    c     (M, K)        row-spike biases (enter the energy with + sign)
    d     (N, K)        column-spike biases (enter the energy with + sign)
    e     (K,)          block-gate biases (enter the energy with - sign)
    """

    shape: BlockShape
    W: np.ndarray
    mu: np.ndarray
    alpha: np.ndarray
    lam: np.ndarray
    c: np.ndarray
    d: np.ndarray
    e: np.ndarray

    def __post_init__(self):
        D, K, M, N = self.shape.D, self.shape.K, self.shape.M, self.shape.N
        self.W = _as_tensor(self.W, (D, M, N, K), "W")
        self.mu = _as_tensor(self.mu, (M, N, K), "mu")
        self.alpha = _as_tensor(self.alpha, (M, N, K), "alpha")
        self.lam = _as_tensor(self.lam, (D,), "lam")
        self.c = _as_tensor(self.c, (M, K), "c")
        self.d = _as_tensor(self.d, (N, K), "d")
        self.e = _as_tensor(self.e, (K,), "e")
        if np.any(self.alpha <= 0):
            raise ValueError("alpha must be strictly positive")
        if np.any(self.lam <= 0):
            raise ValueError("lam must be strictly positive")

    FIELD_ORDER = ("W", "mu", "alpha", "lam", "c", "d", "e")

    def arrays(self):
        """(name, array) pairs in the canonical serialization order."""
        return [(name, getattr(self, name)) for name in self.FIELD_ORDER]

    def copy(self):
        return ModelParams(self.shape, *(a.copy() for _, a in self.arrays()))


@dataclass
class LatentSample:
    """One joint configuration of the latent variables.

    f (K,), g (M, K), h (N, K) are {0,1}-valued; s (M, N, K) is real.
    """

    f: np.ndarray
    g: np.ndarray
    h: np.ndarray
    s: np.ndarray

    def __post_init__(self):
        self.f = np.ascontiguousarray(self.f, dtype=np.float64)
        self.g = np.ascontiguousarray(self.g, dtype=np.float64)
        self.h = np.ascontiguousarray(self.h, dtype=np.float64)
        self.s = np.ascontiguousarray(self.s, dtype=np.float64)
        for name in ("f", "g", "h"):
            arr = getattr(self, name)
            if not np.all((arr == 0) | (arr == 1)):
                raise ValueError(f"{name} entries must be 0 or 1")
        if not np.all(np.isfinite(self.s)):
            raise ValueError("s contains non-finite entries")

    @classmethod
    def zeros(cls, shape):
        return cls(
            f=np.zeros(shape.K),
            g=np.zeros((shape.M, shape.K)),
            h=np.zeros((shape.N, shape.K)),
            s=np.zeros((shape.M, shape.N, shape.K)),
        )

    def copy(self):
        return LatentSample(self.f.copy(), self.g.copy(), self.h.copy(),
                            self.s.copy())


@dataclass
class GaussianSpec:
    """Gaussian with either a diagonal covariance (same shape as the mean,
    elementwise variances) or a dense symmetric covariance matrix."""

    mean: np.ndarray
    covariance: np.ndarray

    @property
    def is_diagonal(self):
        return self.covariance.shape == self.mean.shape


@dataclass
class ParamGrad:
    """Per-parameter gradient tensors, shapes mirroring ModelParams."""

    W: np.ndarray
    mu: np.ndarray
    alpha: np.ndarray
    lam: np.ndarray
    c: np.ndarray
    d: np.ndarray
    e: np.ndarray

    FIELD_ORDER = ModelParams.FIELD_ORDER

    @classmethod
    def zeros(cls, shape):
        D, K, M, N = shape.D, shape.K, shape.M, shape.N
        return cls(
            W=np.zeros((D, M, N, K)), mu=np.zeros((M, N, K)),
            alpha=np.zeros((M, N, K)), lam=np.zeros(D),
            c=np.zeros((M, K)), d=np.zeros((N, K)), e=np.zeros(K),
        )

    def arrays(self):
        return [(name, getattr(self, name)) for name in self.FIELD_ORDER]

    def _zip(self, other, op):
        return ParamGrad(*(op(a, b) for (_, a), (_, b)
                           in zip(self.arrays(), other.arrays())))

    def __add__(self, other):
        return self._zip(other, np.add)

    def __sub__(self, other):
        return self._zip(other, np.subtract)

    def __mul__(self, scalar):
        return ParamGrad(*(a * float(scalar) for _, a in self.arrays()))

    __rmul__ = __mul__

    def norm(self):
        return float(np.sqrt(sum(np.sum(a * a) for _, a in self.arrays())))

    def is_finite(self):
        return all(np.all(np.isfinite(a)) for _, a in self.arrays())


# ---------------------------------------------------------------------------
# shared building blocks


def gate_product(f, g, h):
    """rho_{ijk} = g_{ik} h_{jk} f_k; accepts leading batch axes."""
    return g[..., :, None, :] * h[..., None, :, :] * f[..., None, None, :]


def weight_projections(v, p):
    """y_{ijk} = v'W_{.ijk} for a single v (D,) or a batch (B, D)."""
    v = np.asarray(v, dtype=np.float64)
    if v.shape[-1] != p.shape.D:
        raise ValueError(f"v has trailing dimension {v.shape[-1]}, "
                         f"expected {p.shape.D}")
    return np.einsum('...d,dmnk->...mnk', v, p.W)


def interaction_gain(y, p):
    """Per-triple log-odds gain when a triple switches on.

    T_{ijk} = y_{ijk} mu_{ijk} + y_{ijk}^2 / (2 alpha_{ijk}); this is the
    amount by which the free energy drops when rho_{ijk} flips 0 -> 1.
    """
    return y * p.mu + 0.5 * y * y / p.alpha


def pooled_gain_f(T, g, h):
    """For each block: sum of triple gains over its active (g, h) pairs."""
    return np.einsum('...mnk,...mk,...nk->...k', T, g, h)


def pooled_gain_g(T, h, f):
    return np.einsum('...mnk,...nk,...k->...mk', T, h, f)


def pooled_gain_h(T, g, f):
    return np.einsum('...mnk,...mk,...k->...nk', T, g, f)


def _check_binary_config(p, f, g, h):
    K, M, N = p.shape.K, p.shape.M, p.shape.N
    f = np.asarray(f, dtype=np.float64)
    g = np.asarray(g, dtype=np.float64)
    h = np.asarray(h, dtype=np.float64)
    if f.shape[-1:] != (K,) or g.shape[-2:] != (M, K) or h.shape[-2:] != (N, K):
        raise ValueError(
            f"config shapes {f.shape}/{g.shape}/{h.shape} do not match "
            f"model shape K={K}, M={M}, N={N}")
    return f, g, h


# ---------------------------------------------------------------------------
# energy and free energy


def energy(v, x, p):
    """Joint energy E(v, s, f, g, h) of one configuration."""
    v = np.asarray(v, dtype=np.float64)
    if v.shape != (p.shape.D,):
        raise ValueError(f"v has shape {v.shape}, expected ({p.shape.D},)")
    f, g, h = _check_binary_config(p, x.f, x.g, x.h)
    s = np.asarray(x.s, dtype=np.float64)
    if s.shape != p.mu.shape:
        raise ValueError(f"s has shape {s.shape}, expected {p.mu.shape}")
    rho = gate_product(f, g, h)
    y = weight_projections(v, p)
    E = 0.5 * v @ (p.lam * v)
    E -= p.e @ f
    E += np.sum(p.c * g) + np.sum(p.d * h)
    E += 0.5 * np.sum(p.alpha * s * s)
    E += np.sum((-y * s - p.alpha * p.mu * s + 0.5 * p.alpha * p.mu ** 2) * rho)
    return float(E)


def free_energy(v, f, g, h, p):
    """F(v,f,g,h) = -log integral exp(-E) ds, slabs integrated out.

    Each slab integrates independently given the gates; completing the
    square leaves, per active triple, the gain T_{ijk} (see
    interaction_gain) plus a configuration-independent constant
    -1/2 log(2 pi / alpha_ijk) per triple.
    """
    return float(free_energy_many(v, f, g, h, p))


def free_energy_many(v, f, g, h, p):
    """free_energy for a single v and a batch of configs (leading axes)."""
    if np.any(p.alpha <= 0):
        raise ValueError("free energy undefined: alpha must be positive")
    v = np.asarray(v, dtype=np.float64)
    if v.shape != (p.shape.D,):
        raise ValueError(f"v has shape {v.shape}, expected ({p.shape.D},)")
    f, g, h = _check_binary_config(p, f, g, h)
    rho = gate_product(f, g, h)
    T = interaction_gain(weight_projections(v, p), p)
    out = 0.5 * v @ (p.lam * v)
    out = out - f @ p.e
    out = out + np.einsum('...mk,mk->...', g, p.c)
    out = out + np.einsum('...nk,nk->...', h, p.d)
    out = out - np.einsum('mnk,...mnk->...', T, rho)
    out = out - 0.5 * np.sum(LOG_2PI - np.log(p.alpha))
    return out


# ---------------------------------------------------------------------------
# exact conditionals


def cond_v_given_sfgh(x, p):
    """p(v | s,f,g,h): diagonal Gaussian, always proper.

    mean = Lam^-1 sum_ijk W_{.ijk} s_ijk rho_ijk, covariance Lam^-1.
    """
    f, g, h = _check_binary_config(p, x.f, x.g, x.h)
    rho = gate_product(f, g, h)
    mean = np.einsum('dmnk,mnk->d', p.W, x.s * rho) / p.lam
    return GaussianSpec(mean=mean, covariance=1.0 / p.lam)


def cond_v_given_fgh(f, g, h, p):
    """p(v | f,g,h) with slabs marginalized out: dense Gaussian.

    Active triples sharpen nothing -- they subtract rank-one terms from
    the visible precision, so the precision is
        P = Lam - sum_ijk alpha_ijk^-1 W_{.ijk} W_{.ijk}' rho_ijk
    and the distribution is N(P^-1 m, P^-1) with m = sum W mu rho.
    Raises NotPositiveDefiniteError when P is not positive definite.
    """
    f, g, h = _check_binary_config(p, f, g, h)
    rho = gate_product(f, g, h)
    Wf = p.W.reshape(p.shape.D, -1)
    scaled = (rho / p.alpha).reshape(-1)
    P = np.diag(p.lam) - (Wf * scaled[None, :]) @ Wf.T
    m = Wf @ (p.mu * rho).reshape(-1)
    try:
        L = np.linalg.cholesky(P)
    except np.linalg.LinAlgError:
        raise NotPositiveDefiniteError(
            "visible precision not positive definite for configuration "
            f"f={f.astype(int).tolist()}, g={g.astype(int).tolist()}, "
            f"h={h.astype(int).tolist()}", config=(f, g, h)) from None
    Linv = np.linalg.inv(L)
    cov = Linv.T @ Linv
    cov = 0.5 * (cov + cov.T)
    return GaussianSpec(mean=cov @ m, covariance=cov)


def cond_s(v, f, g, h, p):
    """p(s_ijk | v,f,g,h): independent Gaussians per triple.

    mean = (alpha^-1 v'W + mu) rho, variance alpha^-1; inactive triples
    fall back to their zero-mean prior slab.
    """
    f, g, h = _check_binary_config(p, f, g, h)
    rho = gate_product(f, g, h)
    y = weight_projections(v, p)
    mean = (y / p.alpha + p.mu) * rho
    return GaussianSpec(mean=mean, covariance=np.broadcast_to(
        1.0 / p.alpha, mean.shape).copy())


def cond_f(v, g, h, p):
    """P(f_k = 1 | v, g, h) for every block, as a probability vector."""
    _, g, h = _check_binary_config(p, np.zeros(p.shape.K), g, h)
    T = interaction_gain(weight_projections(v, p), p)
    return sigmoid(p.e + pooled_gain_f(T, g, h))


def cond_g(v, f, h, p):
    """P(g_ik = 1 | v, f, h); bias enters as -c_ik (energy has +c g)."""
    f, _, h = _check_binary_config(p, f, np.zeros((p.shape.M, p.shape.K)), h)
    T = interaction_gain(weight_projections(v, p), p)
    return sigmoid(-p.c + pooled_gain_g(T, h, f))


def cond_h(v, f, g, p):
    """P(h_jk = 1 | v, f, g); bias enters as -d_jk (energy has +d h)."""
    f, g, _ = _check_binary_config(p, f, g, np.zeros((p.shape.N, p.shape.K)))
    T = interaction_gain(weight_projections(v, p), p)
    return sigmoid(-p.d + pooled_gain_h(T, g, f))


# ---------------------------------------------------------------------------
# energy gradients


def energy_grad(v, x, p):
    """-dE/dtheta at (v, x), one tensor per parameter."""
    v = np.asarray(v, dtype=np.float64)
    if v.shape != (p.shape.D,):
        raise ValueError(f"v has shape {v.shape}, expected ({p.shape.D},)")
    f, g, h = _check_binary_config(p, x.f, x.g, x.h)
    s = x.s
    rho = gate_product(f, g, h)
    s_act = s * rho
    return ParamGrad(
        W=np.einsum('d,mnk->dmnk', v, s_act),
        mu=p.alpha * (s - p.mu) * rho,
        alpha=-0.5 * s * s + (p.mu * s - 0.5 * p.mu ** 2) * rho,
        lam=-0.5 * v * v,
        c=-g,
        d=-h,
        e=f.copy(),
    )
