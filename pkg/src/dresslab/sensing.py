"""POMDP observation: segmented point cloud with garment occlusion of the
arm, a single end-effector point, and EMA-smoothed force.

Classes: 0 = garment, 1 = arm, 2 = end-effector. Arm candidates are sampled
uniformly (by area) on the two limb cylinders, then removed if they are
covered by the sleeve (arc coordinate below the deepest threaded ring) or
face away from the fixed camera; survivors are resampled with replacement
to the exact point budget.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .arm import ArmPose, arc_coordinates
from .garment import ForceSample, GarmentState

CLASS_GARMENT, CLASS_ARM, CLASS_EE = 0, 1, 2
DEFAULT_CAMERA = (1.0, 0.6, 1.0)


@dataclass
class Observation:
    positions: np.ndarray        # (N, 3)
    classes: np.ndarray          # (N,) uint8
    force: ForceSample

    @property
    def onehot(self) -> np.ndarray:
        return np.eye(3)[self.classes]

    def validate(self) -> "Observation":
        if (self.classes == CLASS_EE).sum() != 1:
            raise ValueError("observation must contain exactly one end-effector point")
        if self.positions.shape[0] != self.classes.shape[0]:
            raise ValueError("positions/classes length mismatch")
        return self


def _cross3(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    return np.array([a[1] * b[2] - a[2] * b[1],
                     a[2] * b[0] - a[0] * b[2],
                     a[0] * b[1] - a[1] * b[0]])


def _circle_basis(normal: np.ndarray):
    n = normal / max(np.linalg.norm(normal), 1e-12)
    up = np.array([0.0, 1.0, 0.0])
    if abs(n @ up) > 0.99:
        up = np.array([1.0, 0.0, 0.0])
    u = _cross3(n, up)
    u /= np.linalg.norm(u)
    v = _cross3(n, u)
    return u, v


def _ring_normals(garment: GarmentState) -> np.ndarray:
    c = garment.centers
    seg = c[1:] - c[:-1]
    norms = np.linalg.norm(seg, axis=1, keepdims=True)
    seg = np.where(norms > 1e-9, seg / np.maximum(norms, 1e-12),
                   np.array([1.0, 0.0, 0.0]))
    normals = np.vstack([seg, seg[-1:]])          # grasp ring reuses last segment
    return normals


def render_pointcloud(arm: ArmPose, garment: GarmentState,
                      ring_radii: Sequence[float], gripper: np.ndarray,
                      n_garment: int, n_arm: int,
                      rng: np.random.Generator,
                      camera=DEFAULT_CAMERA,
                      arm_candidates: Optional[int] = None) -> Observation:
    """Sample the segmented scene cloud (force left zeroed for the caller)."""
    if n_garment < 1 or n_arm < 1:
        raise ValueError("point budgets must be at least 1")
    camera = np.asarray(camera, dtype=np.float64)

    # garment: uniform over (ring, angle)
    r = garment.centers.shape[0]
    ring_idx = rng.integers(0, r, size=n_garment)
    theta = rng.uniform(0.0, 2.0 * np.pi, size=n_garment)
    normals = _ring_normals(garment)
    basis_u = np.empty((r, 3))
    basis_v = np.empty((r, 3))
    for k in range(r):
        basis_u[k], basis_v[k] = _circle_basis(normals[k])
    radii = np.asarray(ring_radii, dtype=np.float64)
    g_pts = (garment.centers[ring_idx]
             + radii[ring_idx, None] * (np.cos(theta)[:, None] * basis_u[ring_idx]
                                        + np.sin(theta)[:, None] * basis_v[ring_idx]))

    # arm: area-weighted cylinder sampling, then occlusion
    m = arm_candidates or max(4 * n_arm, 64)
    body = arm.body
    area_f = body.forearm_radius * body.forearm_length
    area_u = body.upperarm_radius * body.upperarm_length
    p_fore = area_f / (area_f + area_u)
    on_fore = rng.uniform(size=m) < p_fore
    t = rng.uniform(size=m)
    phi = rng.uniform(0.0, 2.0 * np.pi, size=m)

    cand = np.empty((m, 3))
    cand_normals = np.empty((m, 3))
    for segment, mask in (("fore", on_fore), ("upper", ~on_fore)):
        if segment == "fore":
            a, b, rad = arm.hand, arm.elbow, body.forearm_radius
        else:
            a, b, rad = arm.elbow, arm.shoulder, body.upperarm_radius
        axis = b - a
        u, v = _circle_basis(axis)
        tt = t[mask][:, None]
        radial = (np.cos(phi[mask])[:, None] * u[None, :]
                  + np.sin(phi[mask])[:, None] * v[None, :])
        cand[mask] = a[None, :] + tt * axis[None, :] + rad * radial
        cand_normals[mask] = radial

    s, _ = arc_coordinates(cand, arm)
    covered = s < garment.deepest_threaded_s
    facing = np.einsum("ij,ij->i", cand_normals, camera[None, :] - cand) > 0.0
    visible = ~covered & facing
    vis_idx = np.where(visible)[0]

    if vis_idx.size == 0:
        # degenerate fill: repeat the candidate nearest the shoulder
        nearest = int(np.argmin(np.linalg.norm(cand - arm.shoulder, axis=1)))
        a_pts = np.repeat(cand[nearest][None, :], n_arm, axis=0)
    else:
        pick = vis_idx[rng.integers(0, vis_idx.size, size=n_arm)]
        a_pts = cand[pick]

    positions = np.vstack([g_pts, a_pts,
                           np.asarray(gripper, dtype=np.float64)[None, :]])
    classes = np.concatenate([
        np.full(n_garment, CLASS_GARMENT, dtype=np.uint8),
        np.full(n_arm, CLASS_ARM, dtype=np.uint8),
        np.array([CLASS_EE], dtype=np.uint8)])
    return Observation(positions=positions, classes=classes,
                       force=ForceSample.zero())


def ema_force(prev: Optional[np.ndarray], raw: np.ndarray,
              alpha: float) -> np.ndarray:
    """Exponential moving average; returns raw when no history exists."""
    if not (0.0 < alpha <= 1.0):
        raise ValueError(f"alpha must be in (0, 1], got {alpha}")
    raw = np.asarray(raw, dtype=np.float64)
    if prev is None:
        return raw.copy()
    return alpha * raw + (1.0 - alpha) * np.asarray(prev, dtype=np.float64)


def stack_observations(observations: Sequence[Observation]) -> dict:
    """Batch observations for the networks: positions, one-hots, smoothed
    force. All clouds must share one point budget."""
    pos = np.stack([o.positions for o in observations]).astype(np.float64)
    onehot = np.stack([o.onehot for o in observations]).astype(np.float64)
    force = np.stack([o.force.smoothed for o in observations]).astype(np.float64)
    return {"pos": pos, "onehot": onehot, "force": force}
