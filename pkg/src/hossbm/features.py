"""Feature extraction and linear-decoder evaluation.

The factored representation multiplies each spike marginal with the
norm of its expected slab vector: one value per (row, block) from
g-units and one per (column, block) from h-units.  The unfactored
representation keeps all expected slab contributions (which already
carry their spike products).  Decodability of the ground-truth factors
from each feature block is measured with per-bit logistic decoders.
"""

from dataclasses import dataclass

import numpy as np

from .meanfield import MfConfig, mf_infer_batch


@dataclass(frozen=True)
class FeatureSpec:
    kind: str = "factored"       # or "unfactored"
    include_f: bool = False

    def __post_init__(self):
        if self.kind not in ("factored", "unfactored"):
            raise ValueError(f"unknown feature kind {self.kind!r}")

    def length(self, shape):
        if self.kind == "unfactored":
            return shape.n_slabs
        return shape.M * shape.K + shape.N * shape.K \
            + (shape.K if self.include_f else 0)

    def column_names(self, shape):
        M, N, K = shape.M, shape.N, shape.K
        if self.kind == "unfactored":
            return [f"s_{i}_{j}_{k}" for i in range(M) for j in range(N)
                    for k in range(K)]
        names = [f"g_{i}_{k}" for i in range(M) for k in range(K)]
        names += [f"h_{j}_{k}" for j in range(N) for k in range(K)]
        if self.include_f:
            names += [f"f_{k}" for k in range(K)]
        return names


def features_from_marginals(f_hat, g_hat, h_hat, s_hat, spec):
    """Feature rows from batched mean-field marginals and expected slabs."""
    n = f_hat.shape[0]
    if spec.kind == "unfactored":
        return s_hat.reshape(n, -1).copy()
    g_norm = np.sqrt(np.sum(s_hat ** 2, axis=2))   # (n, M, K)
    h_norm = np.sqrt(np.sum(s_hat ** 2, axis=1))   # (n, N, K)
    parts = [(g_hat * g_norm).reshape(n, -1),
             (h_hat * h_norm).reshape(n, -1)]
    if spec.include_f:
        parts.append(f_hat.reshape(n, -1))
    return np.concatenate(parts, axis=1)


def extract_batch(V, p, spec, mf_cfg=MfConfig(), clamp_f=False):
    """Run inference and build one feature row per visible vector."""
    q = mf_infer_batch(np.atleast_2d(V), p, mf_cfg, clamp_f=clamp_f)
    return features_from_marginals(q.f_hat, q.g_hat, q.h_hat, q.s_hat, spec)


def extract(v, p, spec, mf_cfg=MfConfig(), clamp_f=False):
    """Feature vector for a single visible vector."""
    return extract_batch(np.asarray(v)[None, :], p, spec, mf_cfg,
                         clamp_f=clamp_f)[0]


# ---------------------------------------------------------------------------
# linear decoders


@dataclass
class LinearModel:
    weights: np.ndarray    # (n_classes, n_features)
    bias: np.ndarray       # (n_classes,)
    classes: np.ndarray


def _one_hot(idx, n_classes):
    out = np.zeros((idx.size, n_classes))
    out[np.arange(idx.size), idx] = 1.0
    return out


def fit_linear(features, labels, reg, grad_tol=1e-5, max_iter=10_000):
    """Multinomial logistic regression with an L2 penalty on the weights.

    Full-batch gradient descent with the 1/L step for the smooth part;
    stops at gradient norm <= grad_tol or after max_iter iterations.
    Deterministic: zero init, no shuffling.
    """
    X = np.asarray(features, dtype=np.float64)
    classes, y_idx = np.unique(np.asarray(labels), return_inverse=True)
    if classes.size < 2:
        raise ValueError("labels are degenerate: a single class")
    n, d = X.shape
    ncl = classes.size
    Y = _one_hot(y_idx, ncl)
    # Lipschitz bound for the mean softmax loss plus the ridge term
    lip = np.linalg.norm(X, 2) ** 2 / (4.0 * n) + reg + 1e-12
    step = 1.0 / lip
    W = np.zeros((ncl, d))
    b = np.zeros(ncl)
    for _ in range(max_iter):
        scores = X @ W.T + b
        scores -= scores.max(axis=1, keepdims=True)
        P = np.exp(scores)
        P /= P.sum(axis=1, keepdims=True)
        R = P - Y
        gW = R.T @ X / n + reg * W
        gb = R.mean(axis=0)
        gn = np.sqrt(np.sum(gW * gW) + np.sum(gb * gb))
        if gn <= grad_tol:
            break
        W -= step * gW
        b -= step * gb
    return LinearModel(weights=W, bias=b, classes=classes)


def predict(m, features):
    scores = np.atleast_2d(features) @ m.weights.T + m.bias
    return m.classes[np.argmax(scores, axis=1)]


def accuracy(m, features, labels):
    return float(np.mean(predict(m, features) == np.asarray(labels)))


# ---------------------------------------------------------------------------
# decodability of the ground-truth factors

REG_GRID = (1e-4, 1e-3, 1e-2, 1e-1, 1.0)


def _fit_with_cv(X_tr, y_tr, X_val, y_val, reg_grid):
    """Pick the ridge strength on the validation split, refit on both."""
    best_reg, best_acc = reg_grid[0], -1.0
    for reg in reg_grid:
        m = fit_linear(X_tr, y_tr, reg)
        acc = accuracy(m, X_val, y_val)
        if acc > best_acc:
            best_reg, best_acc = reg, acc
    X_all = np.concatenate([X_tr, X_val])
    y_all = np.concatenate([y_tr, y_val])
    return fit_linear(X_all, y_all, best_reg), best_reg


def _per_bit_accuracy(X_tr, B_tr, X_val, B_val, X_te, B_te, reg_grid):
    accs = []
    for b in range(B_tr.shape[1]):
        m, _ = _fit_with_cv(X_tr, B_tr[:, b], X_val, B_val[:, b], reg_grid)
        accs.append(accuracy(m, X_te, B_te[:, b]))
    return float(np.mean(accs))


@dataclass
class DecodabilityReport:
    """2x2 per-bit decoding accuracies: factors x feature blocks."""

    color_from_g: float
    color_from_h: float
    position_from_g: float
    position_from_h: float
    n_train: int
    n_test: int

    def matrix(self):
        return np.array([[self.color_from_g, self.color_from_h],
                         [self.position_from_g, self.position_from_h]])

    def rows(self):
        return [("color", self.color_from_g, self.color_from_h),
                ("position", self.position_from_g, self.position_from_h)]

    def write_csv(self, path, header_lines=()):
        with open(path, "w") as fh:
            for line in header_lines:
                fh.write(f"# {line}\n")
            fh.write("factor,from_g,from_h\n")
            for name, a, b in self.rows():
                fh.write(f"{name},{a!r},{b!r}\n")

    def text(self):
        lines = [f"decodability (per-bit accuracy, n_train={self.n_train}, "
                 f"n_test={self.n_test})",
                 f"{'factor':<10} {'from g':>8} {'from h':>8}"]
        for name, a, b in self.rows():
            lines.append(f"{name:<10} {a:>8.4f} {b:>8.4f}")
        return "\n".join(lines)


def decodability_report(dataset, p, spec=FeatureSpec(), mf_cfg=MfConfig(),
                        clamp_f=False, center=None, reg_grid=REG_GRID):
    """Train the four factor decoders and report their test accuracies.

    Uses the factored g/h feature blocks.  The dataset is split by index
    (60% train / 20% validation for the ridge grid / 20% test), which is
    deterministic; rows are i.i.d. by construction.
    """
    V = dataset.pixels
    if center is not None:
        V = V - center
    q = mf_infer_batch(V, p, mf_cfg, clamp_f=clamp_f)
    feats = features_from_marginals(
        q.f_hat, q.g_hat, q.h_hat, q.s_hat,
        FeatureSpec(kind="factored", include_f=False))
    n_g = p.shape.M * p.shape.K
    Xg, Xh = feats[:, :n_g], feats[:, n_g:]
    n = dataset.n
    i1, i2 = int(0.6 * n), int(0.8 * n)
    out = {}
    for fac_name, bits in (("color", dataset.color_bits),
                           ("position", dataset.position_bits)):
        for blk_name, X in (("g", Xg), ("h", Xh)):
            out[f"{fac_name}_from_{blk_name}"] = _per_bit_accuracy(
                X[:i1], bits[:i1], X[i1:i2], bits[i1:i2],
                X[i2:], bits[i2:], reg_grid)
    return DecodabilityReport(n_train=i2, n_test=n - i2, **out)
