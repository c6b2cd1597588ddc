"""Episode execution: environment stepping, termination rules, and the
scripted SOURCE-domain expert.

One policy step = one garment step (+ one arm-motion frame while the motion
lasts). Episodes stop on: shoulder reached (deepest threaded arc within
1 cm of the full arm length), raw force above the safety threshold, no
dressing progress for more than `no_progress_window` consecutive steps, or
the step cap. Exactly one reason is recorded, checked in that order.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from typing import List, Optional

import numpy as np

from .arm import (ArmPose, JointState, MotionSpec, Region, classify_region,
                  forward_kinematics, interpolate_motion, polyline_point,
                  sample_initial_config)
from .config import LabConfig
from .garment import GarmentState, ForceSample, init_garment, step_garment
from .sensing import Observation, ema_force, render_pointcloud

# gripper start: above and slightly beyond the hand tip, with the hanging
# chain's cuff ring presented at the hand so threading can begin within the
# no-progress window; the elevation keeps the taut-chain swing short
GRIPPER_OVERHANG = 0.02
GRIPPER_OUT_FRAC = 0.45


class Termination(enum.Enum):
    SHOULDER_REACHED = "shoulder_reached"
    FORCE_EXCEEDED = "force_exceeded"
    NO_PROGRESS = "no_progress"
    MAX_STEPS = "max_steps"


@dataclass(frozen=True)
class EnvConfig:
    domain: str = "source"           # "source" or "target"
    body: str = "medium"
    motion: Optional[str] = None     # None = static arm
    garment: str = "wide"
    max_steps: int = 250
    force_stop: float = 18.0
    no_progress_window: int = 10
    no_progress_eps: float = 0.001
    translation_clip: float = 0.02
    rotation_clip: float = 0.1
    motion_start_step: int = 0
    randomize_start: bool = True

    def key(self) -> tuple:
        return (self.domain, self.body, self.motion or "static", self.garment)


def clip_action(action: np.ndarray, translation_clip: float,
                rotation_clip: float) -> np.ndarray:
    """Clip the 6-D delta by translation and rotation norms."""
    a = np.asarray(action, dtype=np.float64).copy()
    tn = np.linalg.norm(a[:3])
    if tn > translation_clip:
        a[:3] *= translation_clip / tn
    rn = np.linalg.norm(a[3:])
    if rn > rotation_clip:
        a[3:] *= rotation_clip / rn
    return a


class DressingEnv:
    """Single dressing episode; observations carry EMA-smoothed force."""

    def __init__(self, cfg: EnvConfig, lab: LabConfig,
                 rng: np.random.Generator, sensing=None):
        self.cfg = cfg
        self.lab = lab
        self.rng = rng
        self.body = lab.bodies[cfg.body]
        self.garment_spec = lab.garment_for_domain(cfg.garment, cfg.domain)
        self.sensing = sensing if sensing is not None else lab.sensing
        self._frames: List[JointState] = []
        self.steps_taken = 0

    # -- setup ------------------------------------------------------------

    def reset(self) -> Observation:
        cfg, lab = self.cfg, self.lab
        if cfg.motion is not None:
            spec = lab.motion(cfg.motion)
            # a reversed motion runs target -> start; randomization shifts
            # the first endpoint and keeps the straight-line path
            first, last = ((spec.target, spec.start) if spec.reversed
                           else (spec.start, spec.target))
        else:
            first, last = lab.base_joints, lab.base_joints
        if cfg.randomize_start:
            start = sample_initial_config(self.rng, first, self.body,
                                          lab.shoulder_anchor)
        else:
            start = first
        if cfg.motion is not None:
            self._frames = interpolate_motion(
                MotionSpec(name=cfg.motion, start=start, target=last,
                           steps=spec.steps))
        else:
            self._frames = [start]

        self.arm = forward_kinematics(start, self.body, lab.shoulder_anchor)
        ext = self.arm.forearm_dir
        up = np.array([0.0, 1.0, 0.0])
        jitter = self.rng.uniform(-0.01, 0.01, 3) if cfg.randomize_start \
            else np.zeros(3)
        chain = (self.garment_spec.ring_count - 1) * self.garment_spec.rest_spacing
        reach = chain - GRIPPER_OVERHANG
        out = GRIPPER_OUT_FRAC * reach
        height = np.sqrt(max(reach * reach - out * out, 0.0))
        grasp = self.arm.hand + out * ext + height * up + jitter
        self.garment = init_garment(self.garment_spec, self.arm, grasp)
        self.gripper = grasp.copy()
        self.gripper_rot = np.zeros(3)

        self.steps_taken = 0
        self.raw_force = np.zeros(3)
        self.smoothed_force = np.zeros(3)
        self._stagnant = 0
        self._prev_deepest = 0.0
        self.termination: Optional[Termination] = None
        return self._observe()

    def _observe(self) -> Observation:
        obs = render_pointcloud(self.arm, self.garment,
                                self.garment_spec.ring_radii, self.gripper,
                                self.sensing.n_garment, self.sensing.n_arm,
                                self.rng, camera=self.sensing.camera)
        obs.force = ForceSample(self.raw_force.copy(),
                                self.smoothed_force.copy())
        return obs

    # -- stepping ------------------------------------------------------------

    def step(self, action: np.ndarray):
        """Returns (observation, info). info carries privileged state."""
        if self.termination is not None:
            raise RuntimeError("episode already terminated")
        cfg = self.cfg
        a = clip_action(action, cfg.translation_clip, cfg.rotation_clip)
        self.gripper = self.gripper + a[:3]

        # one motion frame per policy step, static after the motion ends
        frame = self.steps_taken + 1 - cfg.motion_start_step
        if 0 <= frame < len(self._frames):
            joints = self._frames[frame]
            self.arm = forward_kinematics(joints, self.body,
                                          self.lab.shoulder_anchor)

        self.garment, raw, snagged = step_garment(
            self.garment, a[:3], a[3:], self.arm, self.garment_spec,
            rng=self.rng)
        self.raw_force = raw
        self.smoothed_force = ema_force(self.smoothed_force, raw,
                                        self.sensing.ema_alpha)
        self.steps_taken += 1

        deepest = self.garment.deepest_threaded_s
        if deepest - self._prev_deepest < cfg.no_progress_eps:
            self._stagnant += 1
        else:
            self._stagnant = 0
        self._prev_deepest = deepest

        if deepest >= self.body.total_length - 0.01:
            self.termination = Termination.SHOULDER_REACHED
        elif np.linalg.norm(raw) > cfg.force_stop:
            self.termination = Termination.FORCE_EXCEEDED
        elif self._stagnant > cfg.no_progress_window:
            self.termination = Termination.NO_PROGRESS
        elif self.steps_taken >= cfg.max_steps:
            self.termination = Termination.MAX_STEPS

        info = {
            "arm": self.arm,
            "gripper": self.gripper.copy(),
            "gripper_rot": self.gripper_rot.copy(),
            "deepest": deepest,
            "raw_force": raw.copy(),
            "snagged": snagged,
            "done": self.termination is not None,
            "termination": self.termination,
        }
        return self._observe(), info


class ScriptedExpert:
    """Privileged geometric controller for SOURCE data collection.

    Rides the arm axis toward the shoulder, slightly offset to the outer
    side of the elbow plane, staying a fixed lead ahead of the dressing
    frontier; rings feed through the hand gate and thread behind it.
    """

    def __init__(self, rng: np.random.Generator, margin: float = 0.02,
                 noise: float = 0.003, outward: float = 0.012,
                 speed: float = 0.02):
        self.rng = rng
        self.margin = margin
        self.noise = noise
        self.outward = outward
        self.speed = speed

    def _outward_normal(self, arm: ArmPose) -> np.ndarray:
        d = arm.hand - arm.elbow
        n = np.array([d[2], 0.0, -d[0]])
        nn = np.linalg.norm(n)
        return n / nn if nn > 1e-9 else np.zeros(3)

    def act(self, env: DressingEnv) -> np.ndarray:
        arm, garment = env.arm, env.garment
        spec = env.garment_spec
        gripper = env.gripper
        # keep the un-dressed sub-chain just taut: the gripper orbits the
        # frontier ring at (remaining rest length + a small tension bias),
        # steering tangentially toward a point one sub-chain ahead on the
        # axis. A slack chain freezes and rings stop feeding onto the arm.
        if garment.threaded.any():
            frontier = int(np.where(garment.threaded)[0].max())
        else:
            frontier = 0
        anchor = garment.centers[frontier]
        remaining = (spec.ring_count - 1 - frontier) * spec.rest_spacing
        hold = remaining + 0.005
        s_t = min(garment.deepest_threaded_s + remaining + self.margin,
                  arm.body.total_length)
        target = polyline_point(arm, s_t) \
            + self.outward * self._outward_normal(arm)

        to_target = target - gripper
        dvec = gripper - anchor
        dist = np.linalg.norm(dvec)
        if dist <= hold + 0.005 and dist > 1e-9:
            radial = dvec / dist
            tang = to_target - (to_target @ radial) * radial
            tn = np.linalg.norm(tang)
            step = (tang / tn * self.speed if tn > 1e-9 else np.zeros(3)) \
                + radial * (hold - dist)
        else:
            n = np.linalg.norm(to_target)
            step = to_target / n * min(n, self.speed) if n > 1e-9 \
                else np.zeros(3)
        step = step + self.rng.normal(0.0, self.noise, 3)
        return np.concatenate([step, np.zeros(3)])
