"""Building blocks for the point networks: MLPs, neighborhood structure,
set abstraction, feature propagation, FiLM modulation and Gaussian heads.

Parameters live in a ParameterStore under a per-layer name prefix so whole
sub-networks can be frozen, copied or checkpointed by name.
"""

from __future__ import annotations

import numpy as np

from .tensor import Tensor, concat, constant, exp, gather_points, relu
from .store import ParameterStore

LOG_STD_MIN = -5.0
LOG_STD_MAX = 2.0


# -- primitive layers ---------------------------------------------------------

class Linear:
    def __init__(self, store: ParameterStore, name: str, n_in: int, n_out: int,
                 rng: np.random.Generator, zero_init: bool = False):
        if zero_init:
            w = np.zeros((n_in, n_out))
        else:
            w = rng.normal(0.0, np.sqrt(2.0 / n_in), size=(n_in, n_out))
        self.w = store.add(name + ".w", w)
        self.b = store.add(name + ".b", np.zeros(n_out))
        self.name = name

    def __call__(self, x: Tensor) -> Tensor:
        return x @ self.w + self.b


class MLP:
    """Linear/ReLU stack; the final layer is linear unless relu_last."""

    def __init__(self, store, name, dims, rng, relu_last=False, zero_last=False):
        self.layers = []
        for i in range(len(dims) - 1):
            zero = zero_last and i == len(dims) - 2
            self.layers.append(Linear(store, f"{name}.{i}", dims[i], dims[i + 1],
                                      rng, zero_init=zero))
        self.relu_last = relu_last

    def __call__(self, x: Tensor) -> Tensor:
        last = len(self.layers) - 1
        for i, layer in enumerate(self.layers):
            x = layer(x)
            if i < last or self.relu_last:
                x = relu(x)
        return x


# -- neighborhood structure ----------------------------------------------------

def build_structure(pos: np.ndarray, radii, k_cap: int, fp_k: int) -> dict:
    """Precompute neighbor indices for a batch of point clouds.

    pos: (B, N, 3). Returns ball-query indices per radius (B, N, k_cap),
    kNN indices (B, N, fp_k) and inverse-square-distance weights for
    feature propagation. Selection is by ascending distance with stable
    index tie-breaks, so results are deterministic.
    """
    pos = np.asarray(pos, dtype=np.float64)
    B, N, _ = pos.shape
    diff = pos[:, :, None, :] - pos[:, None, :, :]
    d2 = np.einsum("bnkc,bnkc->bnk", diff, diff)
    order = np.argsort(d2, axis=-1, kind="stable")
    d2_sorted = np.take_along_axis(d2, order, axis=-1)

    sa_idx = []
    for r in radii:
        k = min(k_cap, N)
        idx = order[:, :, :k].copy()
        in_ball = d2_sorted[:, :, :k] <= r * r
        # a point is always inside its own ball; pad empty slots with the
        # nearest neighbor (column 0)
        nearest = idx[:, :, :1]
        idx = np.where(in_ball, idx, nearest)
        sa_idx.append(idx)

    k = min(fp_k, N)
    knn_idx = order[:, :, :k]
    knn_d2 = d2_sorted[:, :, :k]
    w = 1.0 / (knn_d2 + 1e-8)
    w = w / w.sum(axis=-1, keepdims=True)
    return {"sa_idx": sa_idx, "fp_idx": knn_idx, "fp_w": w}


# -- point-network layers --------------------------------------------------

class SetAbstraction:
    """Grouped local feature extractor at full resolution (sampling ratio 1).

    For every point, gathers neighbors inside a radius-limited ball,
    runs an MLP over (relative position, neighbor feature) and max-pools
    over the neighborhood.
    """

    def __init__(self, store, name, in_dim, widths, rng):
        self.mlp = MLP(store, name, [in_dim + 3] + list(widths), rng,
                       relu_last=True)
        self.out_dim = widths[-1]

    def __call__(self, pos: np.ndarray, feats: Tensor, idx: np.ndarray) -> Tensor:
        B, N, K = idx.shape
        flat_idx = idx.reshape(B, N * K)
        nb_pos = np.take_along_axis(
            pos, flat_idx[:, :, None], axis=1).reshape(B, N, K, 3)
        rel = nb_pos - pos[:, :, None, :]
        nb_feats = gather_points(feats, flat_idx).reshape(B, N, K, -1)
        x = concat([constant(rel.reshape(B, N * K, 3)),
                    nb_feats.reshape(B, N * K, -1)], axis=-1)
        h = self.mlp(x).reshape(B, N, K, self.out_dim)
        return h.max(axis=2)


class FeaturePropagation:
    """Inverse-distance kNN interpolation + skip concat + MLP."""

    def __init__(self, store, name, src_dim, skip_dim, widths, rng):
        self.mlp = MLP(store, name, [src_dim + skip_dim] + list(widths), rng,
                       relu_last=True)
        self.out_dim = widths[-1]

    def __call__(self, src_feats: Tensor, skip_feats: Tensor,
                 idx: np.ndarray, w: np.ndarray) -> Tensor:
        B, N, k = idx.shape
        nb = gather_points(src_feats, idx.reshape(B, N * k)).reshape(B, N, k, -1)
        interp = (nb * constant(w[:, :, :, None])).sum(axis=2)
        return self.mlp(concat([interp, skip_feats], axis=-1))


class FiLMBlock:
    """Per-layer affine modulation of point features from a force vector.

    gamma is parameterized as 1 + delta with the generator's output layer
    zero-initialized, so a fresh block is exactly the identity map for any
    conditioning input.
    """

    def __init__(self, store, name, cond_dim, feat_dim, hidden, rng):
        self.gen = MLP(store, name + ".gen", [cond_dim, hidden, 2 * feat_dim],
                       rng, zero_last=True)
        self.feat_dim = feat_dim

    def __call__(self, feats: Tensor, cond: Tensor) -> Tensor:
        gb = self.gen(cond)                      # (B, 2d)
        d = self.feat_dim
        gamma = gb[:, :d] + 1.0
        beta = gb[:, d:]
        B = gb.shape[0]
        return feats * gamma.reshape(B, 1, d) + beta.reshape(B, 1, d)


# -- Gaussian policy head utilities ---------------------------------------

def gaussian_log_prob(mean: Tensor, log_std: Tensor, action: np.ndarray) -> Tensor:
    """Log density of a diagonal Gaussian at fixed actions. Returns (B,)."""
    action = constant(action)
    inv_std = exp(-log_std)
    z = (action - mean) * inv_std
    dim = mean.shape[-1]
    return (z * z * (-0.5)).sum(axis=-1) - log_std.sum(axis=-1) \
        - 0.5 * dim * np.log(2.0 * np.pi)


def gaussian_sample(mean: np.ndarray, log_std: np.ndarray,
                    rng: np.random.Generator) -> np.ndarray:
    """Draw from a diagonal Gaussian (no gradient tracking)."""
    return mean + np.exp(log_std) * rng.standard_normal(mean.shape)


def gaussian_log_prob_np(mean: np.ndarray, log_std: np.ndarray,
                         action: np.ndarray) -> np.ndarray:
    z = (action - mean) * np.exp(-log_std)
    dim = mean.shape[-1]
    return (-0.5 * z * z).sum(axis=-1) - log_std.sum(axis=-1) \
        - 0.5 * dim * np.log(2.0 * np.pi)
