"""Segmentation- and classification-style point networks.

The segmentation network (policy) runs two set-abstraction layers at full
resolution, a global max pool, and three feature-propagation layers; the
action is read from the end-effector point's feature. Force enters either
through FiLM blocks after every feature-propagation layer, or as an extra
magnitude channel on the end-effector point, or not at all.

The classification network (reward model, critics) reuses the same
set-abstraction encoder, pools to a global feature and maps it (plus an
optional extra vector such as the action) to a scalar.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .tensor import Tensor, concat, constant, gather_points, no_grad, relu
from .store import ParameterStore
from .layers import (MLP, FeaturePropagation, FiLMBlock, Linear,
                     SetAbstraction, build_structure, gaussian_sample,
                     LOG_STD_MIN, LOG_STD_MAX)

FORCE_MODES = ("none", "film", "concat")


@dataclass(frozen=True)
class PointNetConfig:
    sa_radii: tuple = (0.05, 0.10)
    sa_widths: tuple = (64, 128)
    sa_k: int = 16
    global_dim: int = 256
    fp_neighbors: tuple = (1, 3, 3)
    fp_widths: tuple = (128, 128, 64)
    head_hidden: tuple = (64,)
    film_hidden: int = 32

    def build_structure(self, pos: np.ndarray) -> dict:
        return build_structure(pos, self.sa_radii, self.sa_k,
                               max(self.fp_neighbors))


def ee_indices(onehot: np.ndarray) -> np.ndarray:
    """Index of the (single) end-effector point per cloud."""
    return np.argmax(onehot[:, :, 2], axis=1)


class PointNetPolicy:
    """Gaussian policy over 6-D end-effector deltas from a segmented cloud."""

    def __init__(self, store: ParameterStore, cfg: PointNetConfig,
                 force_mode: str, rng: np.random.Generator):
        if force_mode not in FORCE_MODES:
            raise ValueError(f"unknown force mode {force_mode!r}")
        self.cfg = cfg
        self.force_mode = force_mode
        self.store = store
        self.in_dim = 3 + (1 if force_mode == "concat" else 0)

        w1, w2 = cfg.sa_widths
        self.sa1 = SetAbstraction(store, "enc.sa1", self.in_dim, (w1,), rng)
        self.sa2 = SetAbstraction(store, "enc.sa2", w1, (w2,), rng)
        self.global_lin = Linear(store, "enc.global", w2, cfg.global_dim, rng)

        f1, f2, f3 = cfg.fp_widths
        self.fp1 = MLP(store, "fp.0", [cfg.global_dim + w2, f1], rng,
                       relu_last=True)
        self.fp2 = FeaturePropagation(store, "fp.1", f1, w1, (f2,), rng)
        self.fp3 = FeaturePropagation(store, "fp.2", f2, self.in_dim, (f3,), rng)

        self.film = None
        if force_mode == "film":
            self.film = [
                FiLMBlock(store, f"film.{i}", 3, d, cfg.film_hidden, rng)
                for i, d in enumerate(cfg.fp_widths)
            ]

        self.head = MLP(store, "head",
                        [f3] + list(cfg.head_hidden) + [12], rng)

    # prefixes owned by the pretrained vision trunk (everything but FiLM)
    ENCODER_PREFIXES = ("enc.", "fp.", "head.")
    FILM_PREFIXES = ("film.",)

    def point_features(self, onehot: np.ndarray, force: np.ndarray,
                       ee_idx: np.ndarray) -> np.ndarray:
        if self.force_mode != "concat":
            return onehot
        B, N, _ = onehot.shape
        extra = np.zeros((B, N, 1))
        extra[np.arange(B), ee_idx, 0] = np.linalg.norm(force, axis=-1)
        return np.concatenate([onehot, extra], axis=-1)

    def forward(self, pos: np.ndarray, onehot: np.ndarray, force: np.ndarray,
                structure: Optional[dict] = None):
        """Returns (mean, log_std) tensors of shape (B, 6)."""
        cfg = self.cfg
        if structure is None:
            structure = cfg.build_structure(pos)
        ee_idx = ee_indices(onehot)
        feats0 = constant(self.point_features(onehot, force, ee_idx))
        force_t = constant(force)
        B, N = pos.shape[0], pos.shape[1]

        h1 = self.sa1(pos, feats0, structure["sa_idx"][0])
        h2 = self.sa2(pos, h1, structure["sa_idx"][1])
        g = relu(self.global_lin(h2)).max(axis=1)          # (B, G)

        g_b = g.reshape(B, 1, cfg.global_dim) * constant(np.ones((B, N, 1)))
        x = self.fp1(concat([g_b, h2], axis=-1))
        if self.film is not None:
            x = self.film[0](x, force_t)
        x = self.fp2(x, h1, structure["fp_idx"], structure["fp_w"])
        if self.film is not None:
            x = self.film[1](x, force_t)
        x = self.fp3(x, feats0, structure["fp_idx"], structure["fp_w"])
        if self.film is not None:
            x = self.film[2](x, force_t)

        ee_feat = gather_points(x, ee_idx[:, None]).reshape(B, -1)
        out = self.head(ee_feat)
        mean = out[:, :6]
        log_std = out[:, 6:].clip(LOG_STD_MIN, LOG_STD_MAX)
        return mean, log_std

    def act(self, pos, onehot, force, rng=None, deterministic=True,
            structure=None) -> np.ndarray:
        """Numpy-only action selection (no tape)."""
        with no_grad():
            mean, log_std = self.forward(pos, onehot, force, structure)
        if deterministic:
            return mean.data.copy()
        return gaussian_sample(mean.data, log_std.data, rng)

    def distribution(self, pos, onehot, force, structure=None):
        with no_grad():
            mean, log_std = self.forward(pos, onehot, force, structure)
        return mean.data.copy(), log_std.data.copy()


class PointNetScalar:
    """Classification-style network: encoder, global pool, scalar head.

    `extra_dim` values (action, force, ...) are concatenated to the pooled
    global feature before the head MLP.
    """

    def __init__(self, store: ParameterStore, cfg: PointNetConfig,
                 extra_dim: int, rng: np.random.Generator):
        self.cfg = cfg
        self.store = store
        self.extra_dim = extra_dim
        w1, w2 = cfg.sa_widths
        self.sa1 = SetAbstraction(store, "enc.sa1", 3, (w1,), rng)
        self.sa2 = SetAbstraction(store, "enc.sa2", w1, (w2,), rng)
        self.global_lin = Linear(store, "enc.global", w2, cfg.global_dim, rng)
        self.head = MLP(store, "head",
                        [cfg.global_dim + extra_dim] + list(cfg.head_hidden) + [1],
                        rng)

    def forward(self, pos: np.ndarray, onehot: np.ndarray,
                extra: Optional[np.ndarray] = None,
                structure: Optional[dict] = None) -> Tensor:
        if structure is None:
            structure = self.cfg.build_structure(pos)
        B = pos.shape[0]
        feats0 = constant(onehot)
        h1 = self.sa1(pos, feats0, structure["sa_idx"][0])
        h2 = self.sa2(pos, h1, structure["sa_idx"][1])
        g = relu(self.global_lin(h2)).max(axis=1)
        if self.extra_dim:
            g = concat([g, constant(extra)], axis=-1)
        return self.head(g).reshape(B)

    def score(self, pos, onehot, extra=None, structure=None) -> np.ndarray:
        with no_grad():
            return self.forward(pos, onehot, extra, structure).data.copy()

    def pooled(self, pos, onehot, structure=None) -> np.ndarray:
        """Global latent without the head (used by the force-dynamics model)."""
        if structure is None:
            structure = self.cfg.build_structure(pos)
        with no_grad():
            feats0 = constant(onehot)
            h1 = self.sa1(pos, feats0, structure["sa_idx"][0])
            h2 = self.sa2(pos, h1, structure["sa_idx"][1])
            g = relu(self.global_lin(h2)).max(axis=1)
        return g.data.copy()
