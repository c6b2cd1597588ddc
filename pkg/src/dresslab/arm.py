"""Two-segment arm model: forward kinematics, scripted motions, randomized
initial configurations and arc-length coordinates along the arm.

World frame: y is up, the XZ plane is horizontal. With all joints at zero
the arm extends along +x from the shoulder. Shoulder flexion rotates the
arm about z (+x toward +y, i.e. raising), abduction about y, rotation about
the arm axis; elbow flexion bends the forearm in the plane selected by the
shoulder rotation. Arc length s runs hand -> elbow -> shoulder with s = 0
at the hand tip.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, replace
from typing import List, Optional, Tuple

import numpy as np

ELBOW_MAX = 2.6
SHOULDER_MAX = math.pi


class SamplingError(RuntimeError):
    """Raised when rejection sampling fails to find a valid configuration."""


class Region(enum.Enum):
    FOREARM = "forearm"
    ELBOW = "elbow"
    UPPERARM = "upperarm"
    OFF_ARM = "off_arm"


@dataclass(frozen=True)
class BodySize:
    forearm_radius: float
    forearm_length: float
    upperarm_radius: float
    upperarm_length: float
    size_class: str

    def __post_init__(self):
        if not (0.025 <= self.forearm_radius <= 0.045):
            raise ValueError(f"forearm_radius {self.forearm_radius} outside [0.025, 0.045]")
        if not (0.20 <= self.forearm_length <= 0.28):
            raise ValueError(f"forearm_length {self.forearm_length} outside [0.20, 0.28]")
        if not (0.04 <= self.upperarm_radius <= 0.06):
            raise ValueError(f"upperarm_radius {self.upperarm_radius} outside [0.04, 0.06]")
        if not (0.24 <= self.upperarm_length <= 0.30):
            raise ValueError(f"upperarm_length {self.upperarm_length} outside [0.24, 0.30]")
        if self.forearm_radius >= self.upperarm_radius:
            raise ValueError("forearm_radius must be smaller than upperarm_radius")

    @property
    def total_length(self) -> float:
        return self.forearm_length + self.upperarm_length


@dataclass(frozen=True)
class JointState:
    shoulder_abduction: float
    shoulder_flexion: float
    shoulder_rotation: float
    elbow_flexion: float

    def validate(self):
        for name in ("shoulder_abduction", "shoulder_flexion", "shoulder_rotation"):
            v = getattr(self, name)
            if not (-SHOULDER_MAX <= v <= SHOULDER_MAX):
                raise ValueError(f"{name}={v} outside [-pi, pi]")
        if not (0.0 <= self.elbow_flexion <= ELBOW_MAX):
            raise ValueError(f"elbow_flexion={self.elbow_flexion} outside [0, {ELBOW_MAX}]")
        return self

    def as_array(self) -> np.ndarray:
        return np.array([self.shoulder_abduction, self.shoulder_flexion,
                         self.shoulder_rotation, self.elbow_flexion])

    @staticmethod
    def from_array(a) -> "JointState":
        return JointState(float(a[0]), float(a[1]), float(a[2]), float(a[3]))


@dataclass(frozen=True)
class ArmPose:
    shoulder: np.ndarray
    elbow: np.ndarray
    hand: np.ndarray
    body: BodySize

    @property
    def forearm_dir(self) -> np.ndarray:
        """Unit vector elbow -> hand."""
        return (self.hand - self.elbow) / self.body.forearm_length

    @property
    def upperarm_dir(self) -> np.ndarray:
        """Unit vector shoulder -> elbow."""
        return (self.elbow - self.shoulder) / self.body.upperarm_length

    def bend_angle(self) -> float:
        c = float(np.dot(self.upperarm_dir, self.forearm_dir))
        return math.acos(max(-1.0, min(1.0, c)))


@dataclass(frozen=True)
class MotionSpec:
    name: str
    start: JointState
    target: JointState
    steps: int
    reversed: bool = False

    def reverse(self) -> "MotionSpec":
        return replace(self, reversed=not self.reversed)


def _rot_x(t):
    c, s = math.cos(t), math.sin(t)
    return np.array([[1, 0, 0], [0, c, -s], [0, s, c]])


def _rot_y(t):
    c, s = math.cos(t), math.sin(t)
    return np.array([[c, 0, s], [0, 1, 0], [-s, 0, c]])


def _rot_z(t):
    c, s = math.cos(t), math.sin(t)
    return np.array([[c, -s, 0], [s, c, 0], [0, 0, 1]])


X_AXIS = np.array([1.0, 0.0, 0.0])


def forward_kinematics(joints: JointState, body: BodySize,
                       shoulder_anchor) -> ArmPose:
    """Map joint angles to shoulder/elbow/hand positions.

    Segment lengths are preserved exactly (rotations of unit vectors).
    """
    joints.validate()
    shoulder = np.asarray(shoulder_anchor, dtype=np.float64)
    r_s = _rot_y(joints.shoulder_abduction) @ _rot_z(joints.shoulder_flexion) \
        @ _rot_x(joints.shoulder_rotation)
    upper_dir = r_s @ X_AXIS
    elbow = shoulder + body.upperarm_length * upper_dir
    fore_dir = r_s @ _rot_z(joints.elbow_flexion) @ X_AXIS
    hand = elbow + body.forearm_length * fore_dir
    return ArmPose(shoulder=shoulder, elbow=elbow, hand=hand, body=body)


def interpolate_motion(spec: MotionSpec) -> List[JointState]:
    """Linear joint-space interpolation: exactly `steps` states, endpoints
    equal to start and target. The reversed flag flips the sequence."""
    if spec.steps < 2:
        raise ValueError(f"motion needs at least 2 steps, got {spec.steps}")
    a = spec.start.as_array()
    b = spec.target.as_array()
    frames = [JointState.from_array(a + (k / (spec.steps - 1)) * (b - a))
              for k in range(spec.steps)]
    if spec.reversed:
        frames = frames[::-1]
    return frames


def sample_initial_config(rng: np.random.Generator, base: JointState,
                          body: BodySize, shoulder_anchor,
                          elbow_box: float = 0.10, hand_box: float = 0.15,
                          sigma: float = 0.25,
                          max_tries: int = 10000) -> JointState:
    """Randomize the start pose by joint-space perturbation with Cartesian
    rejection: the resulting elbow must lie within +-elbow_box per axis and
    the hand within +-hand_box per axis of the base pose."""
    base.validate()
    if elbow_box == 0.0 and hand_box == 0.0:
        return base
    ref = forward_kinematics(base, body, shoulder_anchor)
    lows = np.array([-SHOULDER_MAX, -SHOULDER_MAX, -SHOULDER_MAX, 0.0])
    highs = np.array([SHOULDER_MAX, SHOULDER_MAX, SHOULDER_MAX, ELBOW_MAX])
    for _ in range(max_tries):
        angles = np.clip(base.as_array() + rng.normal(0.0, sigma, 4),
                         lows, highs)
        cand = JointState.from_array(angles)
        pose = forward_kinematics(cand, body, shoulder_anchor)
        if (np.abs(pose.elbow - ref.elbow) <= elbow_box).all() \
                and (np.abs(pose.hand - ref.hand) <= hand_box).all():
            return cand
    raise SamplingError(
        f"no valid initial configuration in {max_tries} draws "
        f"(elbow_box={elbow_box}, hand_box={hand_box})")


def _project_to_segment(points: np.ndarray, a: np.ndarray, b: np.ndarray):
    """Clamped projection of points (M,3) onto segment a->b.

    Returns (t in [0,1], squared distance)."""
    ab = b - a
    denom = float(ab @ ab)
    t = np.clip((points - a) @ ab / denom, 0.0, 1.0)
    closest = a + t[:, None] * ab
    d2 = ((points - closest) ** 2).sum(axis=1)
    return t, d2


def arc_coordinates(points: np.ndarray, arm: ArmPose):
    """Vectorized arc coordinates: points (M,3) -> (s (M,), distance (M,)).

    s is measured from the hand tip along hand->elbow->shoulder; distance is
    the perpendicular distance to the closest polyline segment. Ties go to
    the forearm segment.
    """
    points = np.atleast_2d(np.asarray(points, dtype=np.float64))
    lf, lu = arm.body.forearm_length, arm.body.upperarm_length
    t1, d1 = _project_to_segment(points, arm.hand, arm.elbow)
    t2, d2 = _project_to_segment(points, arm.elbow, arm.shoulder)
    use_fore = d1 <= d2
    s = np.where(use_fore, t1 * lf, lf + t2 * lu)
    dist = np.sqrt(np.where(use_fore, d1, d2))
    return s, dist


def arc_coordinate(p, arm: ArmPose,
                   off_cutoff: float = 0.5) -> Tuple[float, Region]:
    """Arc coordinate and region of a single point.

    The elbow region is the closed interval [0.75*Lf, Lf + 0.25*Lu]; points
    farther than off_cutoff from the polyline are OFF_ARM.
    """
    s_arr, d_arr = arc_coordinates(np.asarray(p, dtype=np.float64)[None, :], arm)
    s, dist = float(s_arr[0]), float(d_arr[0])
    region = classify_region(s, arm.body, dist, off_cutoff)
    return s, region


def classify_region(s: float, body: BodySize, dist: float = 0.0,
                    off_cutoff: float = 0.5) -> Region:
    if dist > off_cutoff:
        return Region.OFF_ARM
    lf, lu = body.forearm_length, body.upperarm_length
    if 0.75 * lf <= s <= lf + 0.25 * lu:
        return Region.ELBOW
    if s < 0.75 * lf:
        return Region.FOREARM
    return Region.UPPERARM


def polyline_point(arm: ArmPose, s: float) -> np.ndarray:
    """Point on the hand->elbow->shoulder polyline at arc length s."""
    lf = arm.body.forearm_length
    s = min(max(s, 0.0), arm.body.total_length)
    if s <= lf:
        return arm.hand + (s / lf) * (arm.elbow - arm.hand)
    t = (s - lf) / arm.body.upperarm_length
    return arm.elbow + t * (arm.shoulder - arm.elbow)


def polyline_tangent(arm: ArmPose, s: float) -> np.ndarray:
    """Unit direction of increasing s at arc length s."""
    if s <= arm.body.forearm_length:
        return (arm.elbow - arm.hand) / arm.body.forearm_length
    return (arm.shoulder - arm.elbow) / arm.body.upperarm_length


def local_radius(arm: ArmPose, s: float) -> float:
    """Arm surface radius at arc length s (step change at the elbow)."""
    if s <= arm.body.forearm_length:
        return arm.body.forearm_radius
    return arm.body.upperarm_radius
