"""Small numerical helpers used throughout the package."""

import numpy as np


def sigmoid(x):
    """Numerically stable logistic function."""
    x = np.asarray(x, dtype=np.float64)
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def logsumexp(a, axis=None):
    """log(sum(exp(a))) without overflow; -inf-safe."""
    a = np.asarray(a, dtype=np.float64)
    amax = np.max(a, axis=axis, keepdims=True)
    amax = np.where(np.isfinite(amax), amax, 0.0)
    out = np.log(np.sum(np.exp(a - amax), axis=axis, keepdims=True)) + amax
    if axis is None:
        return float(out)
    return np.squeeze(out, axis=axis)


def xlogx(q):
    """q * log(q) with the 0 * log(0) = 0 convention."""
    q = np.asarray(q, dtype=np.float64)
    safe = np.where(q > 0, q, 1.0)
    return np.where(q > 0, q * np.log(safe), 0.0)


def bernoulli_entropy(p):
    """Entropy (nats) of Bernoulli(p), elementwise; exact 0 at p in {0, 1}."""
    return -(xlogx(p) + xlogx(1.0 - p))
