"""Configuration tables and scale presets.

The editable tables (bodies, motions, garments, domains, sensing, episode
rules) ship as JSON in dresslab/data/defaults.json and can be overridden
by a user JSON file with the same structure (deep merge). Training scale
presets live here: "paper" mirrors the published hyperparameters, "desk"
is sized to run the whole pipeline on a laptop CPU.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, replace
from importlib import resources
from typing import Dict, Optional

import numpy as np

from .arm import BodySize, JointState, MotionSpec
from .garment import GarmentSpec
from .nn.pointnet import PointNetConfig


@dataclass(frozen=True)
class DomainScale:
    spring_scale: float = 1.0
    noise_scale: float = 1.0
    radius_scale: float = 1.0


@dataclass(frozen=True)
class SensingConfig:
    n_garment: int = 300
    n_arm: int = 200
    camera: tuple = (1.0, 0.6, 1.0)
    ema_alpha: float = 0.5

    @property
    def n_points(self) -> int:
        return self.n_garment + self.n_arm + 1


@dataclass(frozen=True)
class EnvDefaults:
    max_steps: int = 250
    force_stop: float = 18.0
    no_progress_window: int = 10
    no_progress_eps: float = 0.001
    translation_clip: float = 0.02
    rotation_clip: float = 0.1
    motion_start_step: int = 0


class LabConfig:
    """Typed view over the table config (bodies, motions, garments, ...)."""

    def __init__(self, raw: dict):
        self.raw = raw
        self.shoulder_anchor = np.asarray(raw["shoulder_anchor"], dtype=np.float64)
        self.base_joints = JointState.from_array(raw["base_joints"])
        self.bodies: Dict[str, BodySize] = {
            name: BodySize(size_class=name, **fields)
            for name, fields in raw["bodies"].items()
        }
        gdef = raw["garment_defaults"]
        self.garments: Dict[str, GarmentSpec] = {
            name: GarmentSpec(name=name,
                              ring_radii=tuple(g["ring_radii"]),
                              rest_spacing=g["rest_spacing"],
                              spring_k=g.get("spring_k", gdef["spring_k"]),
                              snag_clearance=gdef["snag_clearance"],
                              thread_clearance=gdef["thread_clearance"],
                              n_relax=gdef["n_relax"],
                              force_noise_sigma=gdef["force_noise_sigma"],
                              elbow_pass_threshold=gdef["elbow_pass_threshold"])
            for name, g in raw["garments"].items()
        }
        self.domains: Dict[str, DomainScale] = {
            name: DomainScale(**fields) for name, fields in raw["domains"].items()
        }
        self._motions: Dict[str, MotionSpec] = {
            name: MotionSpec(name=name,
                             start=JointState.from_array(m["start"]),
                             target=JointState.from_array(m["target"]),
                             steps=m["steps"])
            for name, m in raw["motions"].items()
        }
        s = raw["sensing"]
        self.sensing = SensingConfig(n_garment=s["n_garment"], n_arm=s["n_arm"],
                                     camera=tuple(s["camera"]),
                                     ema_alpha=s["ema_alpha"])
        e = raw["env"]
        self.env = EnvDefaults(**e)
        self.splits = dict(raw["splits"])

    # motions: "rev_<name>" plays the interpolated sequence backwards
    def motion(self, name: str) -> MotionSpec:
        if name.startswith("rev_"):
            return self._motions[name[4:]].reverse()
        return self._motions[name]

    def motion_names(self, include_reversed: bool = True):
        names = list(self._motions.keys())
        if include_reversed:
            names += ["rev_" + n for n in self._motions.keys()]
        return names

    def garment_for_domain(self, garment: str, domain: str) -> GarmentSpec:
        scale = self.domains[domain]
        return self.garments[garment].scaled(spring_scale=scale.spring_scale,
                                             noise_scale=scale.noise_scale,
                                             radius_scale=scale.radius_scale)


def _deep_merge(base: dict, override: dict) -> dict:
    out = dict(base)
    for k, v in override.items():
        if isinstance(v, dict) and isinstance(out.get(k), dict):
            out[k] = _deep_merge(out[k], v)
        else:
            out[k] = v
    return out


def load_lab_config(path: Optional[str] = None) -> LabConfig:
    """Default tables, optionally deep-merged with a user JSON file."""
    with resources.files("dresslab.data").joinpath("defaults.json").open() as f:
        raw = json.load(f)
    if path is not None:
        with open(path) as f:
            raw = _deep_merge(raw, json.load(f))
    return LabConfig(raw)


@dataclass(frozen=True)
class TrainConfig:
    """Knobs for the learning pipeline at one scale."""

    net: PointNetConfig = PointNetConfig()
    sensing: SensingConfig = SensingConfig()

    source_episodes: int = 800
    bc_steps: int = 40000
    bc_batch: int = 128
    bc_lr: float = 1e-4

    target_trajectories: int = 204

    n_oracle_labels: int = 4000
    n_time_labels: int = 4000
    oracle_margin: float = 0.02
    oracle_flip_prob: float = 0.1
    reward_epochs: int = 1000
    reward_batch: int = 64
    reward_lr: float = 1e-4
    reward_patience: int = 20
    reward_min_delta: float = 1e-4
    w_force: float = 0.1
    force_percentile: float = 95.0

    iql_steps: int = 20000
    iql_batch: int = 128
    iql_lr: float = 1e-4
    iql_expectile: float = 0.7
    iql_beta: float = 3.0
    iql_discount: float = 0.99
    iql_polyak: float = 0.005

    fcvp_candidates: int = 32
    fcvp_threshold: float = 40.0
    fcvp_window: int = 5
    fcvp_steps: int = 3000

    eval_trials: int = 10


def paper_scale() -> TrainConfig:
    return TrainConfig()


def desk_scale() -> TrainConfig:
    """Small networks and budgets: full pipeline in CPU-minutes."""
    net = PointNetConfig(sa_widths=(32, 48), sa_k=8, global_dim=96,
                         fp_widths=(48, 48, 32), head_hidden=(32,),
                         film_hidden=16)
    return TrainConfig(
        net=net,
        sensing=SensingConfig(n_garment=48, n_arm=32),
        source_episodes=240,
        bc_steps=3000, bc_batch=64, bc_lr=3e-4,
        reward_epochs=60, reward_lr=3e-4,
        iql_steps=1200, iql_batch=64, iql_lr=3e-4,
        fcvp_steps=1500,
        eval_trials=5,
    )


SCALES = {"paper": paper_scale, "desk": desk_scale}


def train_config(scale: str = "desk", overrides: Optional[dict] = None) -> TrainConfig:
    cfg = SCALES[scale]()
    if overrides:
        net_over = overrides.pop("net", None)
        sensing_over = overrides.pop("sensing", None)
        if net_over:
            cfg = replace(cfg, net=replace(cfg.net, **{
                k: tuple(v) if isinstance(v, list) else v
                for k, v in net_over.items()}))
        if sensing_over:
            cfg = replace(cfg, sensing=replace(cfg.sensing, **{
                k: tuple(v) if isinstance(v, list) else v
                for k, v in sensing_over.items()}))
        cfg = replace(cfg, **overrides)
    return cfg
