"""Ring-chain sleeve surrogate.

A sleeve is a chain of rigid rings joined by tension-only springs. The
grasp-end ring is pinned to the gripper; rings thread onto the arm when
dragged close to its axis, ride the arm as it moves, and advance along it
unless blocked (too little radial clearance, or a bent elbow under the
ring). Chain stretch between the deepest threaded ring and the gripper
produces the 3-D pull force reported at the gripper.

Relaxation is a damped tension-only Jacobi update (displacement =
0.25 * summed excess corrections per ring). That step size is below the
stability bound of the spring energy, so a relaxation pass never increases
the sum of squared spacing errors; sweep-style updates do not have this
guarantee when both chain ends are pinned.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import Optional, Tuple

import numpy as np

from .arm import ArmPose, Region, arc_coordinates, classify_region, \
    local_radius, polyline_point, polyline_tangent

RELAX_DAMPING = 0.25
GRASP_REACH = 0.4


class GraspError(ValueError):
    """Grasp pose out of reach of the hand region."""


@dataclass(frozen=True)
class GarmentSpec:
    name: str
    ring_radii: tuple            # per-ring radius, cuff -> grasp order
    rest_spacing: float
    spring_k: float = 50.0
    snag_clearance: float = 0.01
    thread_clearance: float = 0.04
    n_relax: int = 8
    force_noise_sigma: float = 0.2
    elbow_pass_threshold: float = 0.7

    def __post_init__(self):
        if len(self.ring_radii) < 4:
            raise ValueError("garment needs at least 4 rings")
        if min(self.ring_radii) <= 0:
            raise ValueError("ring radii must be positive")
        if self.rest_spacing <= 0 or self.spring_k <= 0:
            raise ValueError("rest_spacing and spring_k must be positive")

    @property
    def ring_count(self) -> int:
        return len(self.ring_radii)

    def scaled(self, spring_scale=1.0, noise_scale=1.0, radius_scale=1.0):
        """Domain variant (e.g. the TARGET simulator's perturbed dynamics)."""
        return replace(
            self,
            ring_radii=tuple(r * radius_scale for r in self.ring_radii),
            spring_k=self.spring_k * spring_scale,
            force_noise_sigma=self.force_noise_sigma * noise_scale)


@dataclass
class ForceSample:
    raw: np.ndarray
    smoothed: np.ndarray

    @staticmethod
    def zero() -> "ForceSample":
        return ForceSample(np.zeros(3), np.zeros(3))


@dataclass
class GarmentState:
    centers: np.ndarray          # (R, 3)
    threaded: np.ndarray         # (R,) bool, contiguous prefix cuff->grasp
    ring_s: np.ndarray           # (R,) arc coordinate, valid where threaded
    grasp_position: np.ndarray
    grasp_orientation: np.ndarray  # axis-angle

    @property
    def deepest_threaded_s(self) -> float:
        if not self.threaded.any():
            return 0.0
        return float(self.ring_s[self.threaded].max())

    def copy(self) -> "GarmentState":
        return GarmentState(self.centers.copy(), self.threaded.copy(),
                            self.ring_s.copy(), self.grasp_position.copy(),
                            self.grasp_orientation.copy())


# -- axis-angle helpers (grasp orientation bookkeeping) ----------------------

def _axis_angle_to_matrix(v: np.ndarray) -> np.ndarray:
    theta = np.linalg.norm(v)
    if theta < 1e-12:
        return np.eye(3)
    k = v / theta
    kx = np.array([[0, -k[2], k[1]], [k[2], 0, -k[0]], [-k[1], k[0], 0]])
    return np.eye(3) + math.sin(theta) * kx + (1 - math.cos(theta)) * kx @ kx


def _matrix_to_axis_angle(m: np.ndarray) -> np.ndarray:
    cos_t = max(-1.0, min(1.0, (np.trace(m) - 1.0) / 2.0))
    theta = math.acos(cos_t)
    if theta < 1e-12:
        return np.zeros(3)
    if math.pi - theta < 1e-6:
        # near-pi: extract axis from the symmetric part
        w, v = np.linalg.eigh((m + np.eye(3)) / 2.0)
        axis = v[:, np.argmax(w)]
        return axis * theta
    axis = np.array([m[2, 1] - m[1, 2], m[0, 2] - m[2, 0], m[1, 0] - m[0, 1]])
    return axis / (2.0 * math.sin(theta)) * theta


def compose_axis_angle(delta: np.ndarray, base: np.ndarray) -> np.ndarray:
    return _matrix_to_axis_angle(
        _axis_angle_to_matrix(np.asarray(delta, dtype=np.float64))
        @ _axis_angle_to_matrix(np.asarray(base, dtype=np.float64)))


# -- lifecycle ----------------------------------------------------------------

def init_garment(spec: GarmentSpec, arm: ArmPose, grasp_position,
                 grasp_orientation=None) -> GarmentState:
    """Hang the chain from the gripper toward the hand tip; nothing threaded."""
    grasp = np.asarray(grasp_position, dtype=np.float64)
    if np.linalg.norm(grasp - arm.hand) > GRASP_REACH:
        raise GraspError(
            f"grasp {np.round(grasp, 3)} farther than {GRASP_REACH} m from the hand")
    d = arm.hand - grasp
    n = np.linalg.norm(d)
    d = d / n if n > 1e-9 else arm.forearm_dir
    r = spec.ring_count
    offsets = (r - 1 - np.arange(r))[:, None] * spec.rest_spacing * d[None, :]
    centers = grasp[None, :] + offsets
    orientation = np.zeros(3) if grasp_orientation is None \
        else np.asarray(grasp_orientation, dtype=np.float64)
    return GarmentState(
        centers=centers,
        threaded=np.zeros(r, dtype=bool),
        ring_s=np.zeros(r),
        grasp_position=grasp.copy(),
        grasp_orientation=orientation.copy())


def _blocked(spec: GarmentSpec, arm: ArmPose, bend: float, ring_idx: int,
             s_now: float, s_next: float) -> bool:
    """Advancement gate for a threaded ring moving from s_now to s_next."""
    if spec.ring_radii[ring_idx] <= local_radius(arm, s_next) + spec.snag_clearance:
        return True
    if bend > spec.elbow_pass_threshold \
            and classify_region(s_now, arm.body) is Region.ELBOW:
        return True
    return False


def step_garment(state: GarmentState, gripper_translation, gripper_rotation,
                 arm: ArmPose, spec: GarmentSpec,
                 rng: Optional[np.random.Generator] = None
                 ) -> Tuple[GarmentState, np.ndarray, bool]:
    """Advance the chain one step under a rigid gripper delta.

    Returns (new state, raw force at the gripper, snagged flag). With
    rng=None or zero noise the update is fully deterministic.
    """
    ns = state.copy()
    r = spec.ring_count
    rest = spec.rest_spacing

    ns.grasp_position = ns.grasp_position + np.asarray(gripper_translation,
                                                       dtype=np.float64)
    rot = np.asarray(gripper_rotation, dtype=np.float64)
    if np.linalg.norm(rot) > 0:
        ns.grasp_orientation = compose_axis_angle(rot, ns.grasp_orientation)
    ns.centers[-1] = ns.grasp_position

    # threaded rings ride the (possibly moved) arm at their arc coordinate
    threaded_idx = np.where(ns.threaded)[0]
    for i in threaded_idx:
        ns.centers[i] = polyline_point(arm, ns.ring_s[i])

    snagged = False
    total = arm.body.total_length
    bend = arm.bend_angle()
    for _ in range(spec.n_relax):
        seg = ns.centers[1:] - ns.centers[:-1]
        length = np.linalg.norm(seg, axis=1)
        safe = np.maximum(length, 1e-12)
        excess = np.maximum(0.0, length - rest)
        pull = seg * (excess / safe)[:, None]     # (R-1,3), toward higher index
        corr = np.zeros_like(ns.centers)
        corr[:-1] += pull
        corr[1:] -= pull
        delta = RELAX_DAMPING * corr

        free = ~ns.threaded
        free[-1] = False                          # grasp ring pinned
        ns.centers[free] += delta[free]

        for i in threaded_idx:
            t = polyline_tangent(arm, ns.ring_s[i])
            ds = float(delta[i] @ t)
            if ds <= 1e-9:
                continue                          # threaded rings ratchet
            s_next = min(ns.ring_s[i] + ds, total)
            if _blocked(spec, arm, bend, i, ns.ring_s[i], s_next):
                snagged = True
                continue
            ns.ring_s[i] = s_next
            ns.centers[i] = polyline_point(arm, s_next)

    # thread the next cuff->grasp prefix ring(s) that reach the axis
    prefix_end = int(ns.threaded.sum())
    while prefix_end < r - 1:
        k = prefix_end
        s_arr, d_arr = arc_coordinates(ns.centers[k][None, :], arm)
        s, dist = float(s_arr[0]), float(d_arr[0])
        if dist <= spec.thread_clearance \
                and spec.ring_radii[k] > local_radius(arm, s):
            ns.threaded[k] = True
            ns.ring_s[k] = s
            ns.centers[k] = polyline_point(arm, s)
            prefix_end += 1
        else:
            break

    raw = chain_force(ns, spec)
    if rng is not None and spec.force_noise_sigma > 0:
        raw = raw + rng.normal(0.0, spec.force_noise_sigma, 3)
    return ns, raw, snagged


def chain_force(state: GarmentState, spec: GarmentSpec) -> np.ndarray:
    """Spring tension on the gripper from the deepest threaded ring.

    Zero when nothing is threaded or the sub-chain is slack. Points from
    the gripper toward its neighbor ring (tension pulls the gripper back).
    """
    if not state.threaded.any():
        return np.zeros(3)
    s_masked = np.where(state.threaded, state.ring_s, -np.inf)
    idx_deep = int(np.argmax(s_masked))
    seg = state.centers[idx_deep + 1:] - state.centers[idx_deep:-1]
    length = float(np.linalg.norm(seg, axis=1).sum())
    rest_len = (spec.ring_count - 1 - idx_deep) * spec.rest_spacing
    stretch = length - rest_len
    if stretch <= 0.0:
        return np.zeros(3)
    last = state.centers[-2] - state.centers[-1]
    n = np.linalg.norm(last)
    if n < 1e-12:
        return np.zeros(3)
    return spec.spring_k * stretch * (last / n)


def dressed_lengths(state: GarmentState, arm: ArmPose) -> Tuple[float, float]:
    """Covered lengths (forearm, upper arm) implied by the deepest ring."""
    s = state.deepest_threaded_s
    lf, lu = arm.body.forearm_length, arm.body.upperarm_length
    forearm = min(max(s, 0.0), lf)
    upper = min(max(s - lf, 0.0), lu)
    return forearm, upper
