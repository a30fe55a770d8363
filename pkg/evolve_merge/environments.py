#!/usr/bin/env python3
"""
Environments
Environment contract, morphology variants and two built-in deterministic environments:
SegWalker2D (planar quadruped locomotion) and AssocTask (episodic pattern association).
"""

import logging
from enum import Enum
from typing import Any, Dict, List, Literal, Optional, Sequence, Tuple

import gymnasium as gym
import numpy as np
from gymnasium import spaces
from pydantic import BaseModel, ConfigDict, Field, field_validator

from .exceptions import ArgumentError, ConfigurationError, EnvironmentStateError

# Configure logging
logger = logging.getLogger(__name__)

LIMB_IDS: Tuple[str, ...] = ("frontleft", "frontright", "backleft", "backright")

# Lower-segment lengths 0.39 ... 0.35 relative to the standard 0.4
LEG_REDUCTIONS: Tuple[float, ...] = (0.975, 0.95, 0.925, 0.9, 0.875)
LIMB_COMBOS: Tuple[Tuple[str, ...], ...] = (
    ("frontleft",),
    ("frontright",),
    ("backleft",),
    ("backright",),
    ("frontleft", "frontright"),
    ("frontleft", "backright"),
)


class RewardMode(str, Enum):
    FULL = "FULL"
    DISTANCE_ONLY = "DISTANCE_ONLY"


class EnvSpec(BaseModel):
    model_config = ConfigDict(frozen=True)

    obs_dim: int = Field(ge=1)
    act_dim: int = Field(ge=1)
    episode_steps: int = Field(default=1000, ge=1)
    reward_mode: RewardMode = RewardMode.FULL


class MorphologyVariant(BaseModel):
    model_config = ConfigDict(frozen=True)

    limb_scales: Dict[str, float] = Field(default_factory=lambda: {limb: 1.0 for limb in LIMB_IDS})
    label: str = "standard"

    @field_validator("limb_scales")
    @classmethod
    def _check_scales(cls, scales: Dict[str, float]) -> Dict[str, float]:
        unknown = set(scales) - set(LIMB_IDS)
        if unknown:
            raise ValueError(f"unknown limb ids: {sorted(unknown)}")
        for limb, factor in scales.items():
            if not 0.0 < factor <= 1.0:
                raise ValueError(f"scale for {limb} must be in (0, 1], got {factor}")
        return {limb: float(scales.get(limb, 1.0)) for limb in LIMB_IDS}

    def scale_for(self, limb: str) -> float:
        return self.limb_scales[limb]

    @property
    def is_standard(self) -> bool:
        return all(factor == 1.0 for factor in self.limb_scales.values())


STANDARD_MORPHOLOGY = MorphologyVariant()


class EpisodeResult(BaseModel):
    fitness: float
    distance: float
    steps_survived: int


def make_variant_grid(reductions: Sequence[float], limb_combos: Sequence[Sequence[str]]) -> List[MorphologyVariant]:
    """Cartesian product of limb combinations and reduction levels, combo-major."""
    if not reductions or not limb_combos:
        raise ConfigurationError("variant grid needs at least one reduction and one limb combination")
    variants = []
    for combo in limb_combos:
        unknown = [limb for limb in combo if limb not in LIMB_IDS]
        if unknown or not combo:
            raise ConfigurationError(f"unknown limb id(s) {unknown} in combination {list(combo)}")
        for level in reductions:
            if not 0.0 < level <= 1.0:
                raise ConfigurationError(f"reduction level must be in (0, 1], got {level}")
            scales = {limb: (level if limb in combo else 1.0) for limb in LIMB_IDS}
            variants.append(MorphologyVariant(limb_scales=scales, label=f"{'+'.join(combo)}@{level:g}"))
    return variants


def leg_reduction_grid() -> List[MorphologyVariant]:
    """Five ankle reductions on six leg combinations (30 variants)."""
    return make_variant_grid(LEG_REDUCTIONS, LIMB_COMBOS)


def variant_grid_by_name(name: str) -> List[MorphologyVariant]:
    grids = {"paper30": leg_reduction_grid, "standard": lambda: []}
    if name not in grids:
        raise ConfigurationError(f"unknown variant grid '{name}', choose from {sorted(grids)}")
    return grids[name]()


def add_observation_noise(obs: np.ndarray, sigma_noise: float, rng: np.random.Generator) -> np.ndarray:
    if sigma_noise < 0:
        raise ArgumentError(f"sigma_noise must be non-negative, got {sigma_noise}")
    if sigma_noise == 0:
        return obs
    return obs + rng.normal(0.0, sigma_noise, size=np.shape(obs))


class SegWalker2D(gym.Env):
    """Planar body on four two-segment legs driven by eight torque-controlled joints.

    Joints are damped rotors pulled towards a rest pose; feet touch the ground through penalty
    springs with viscous friction bounded by a Coulomb cone. Integration is semi-implicit Euler.
    Observation: [z, pitch, vx, vz], 8 joint angles, 8 joint velocities (x0.1),
    (contact flag, foot height) per leg. Actions: (hip, knee) per leg in LIMB_IDS order.
    """

    metadata = {"render_modes": []}

    DT = 0.01
    GRAVITY = 9.81
    BODY_MASS = 1.0
    BODY_INERTIA = 0.5
    BODY_ANGULAR_DAMPING = 0.1
    HIP_OFFSETS = np.array([0.5, 0.5, -0.5, -0.5])
    UPPER_LENGTH = 0.4
    LOWER_LENGTH = 0.4
    JOINT_INERTIA = 0.05
    JOINT_GEAR = 1.0
    JOINT_STIFFNESS = 2.0
    JOINT_DAMPING = 0.5
    REST_POSE = np.tile([0.0, -0.5], 4)
    JOINT_LOW = np.tile([-1.2, -1.8], 4)
    JOINT_HIGH = np.tile([1.2, 0.3], 4)
    GROUND_STIFFNESS = 500.0
    GROUND_DAMPING = 20.0
    FRICTION_DAMPING = 10.0
    FRICTION_COEF = 1.0
    BODY_GROUND_STIFFNESS = 2000.0
    BODY_GROUND_DAMPING = 50.0
    SURVIVAL_BONUS = 0.5
    UPRIGHT_PITCH = 0.5
    UPRIGHT_HEIGHT = 0.3
    INSTABILITY_BOUND = 1e6
    RESET_NOISE = 0.005

    def __init__(self, episode_steps: int = 1000, reward_mode: RewardMode = RewardMode.FULL):
        super().__init__()
        self.env_spec = EnvSpec(obs_dim=28, act_dim=8, episode_steps=episode_steps, reward_mode=reward_mode)
        self.observation_space = spaces.Box(-np.inf, np.inf, shape=(28,), dtype=np.float64)
        self.action_space = spaces.Box(-1.0, 1.0, shape=(8,), dtype=np.float64)
        self.variant = STANDARD_MORPHOLOGY
        self.lower_lengths = np.full(4, self.LOWER_LENGTH)
        self.body = np.zeros(6)  # x, z, pitch, vx, vz, pitch rate
        self.joint_pos = self.REST_POSE.copy()
        self.joint_vel = np.zeros(8)
        self._x0 = 0.0
        self._steps = 0
        self._done = True

    def _feet(self) -> Tuple[np.ndarray, ...]:
        """Foot positions, velocities and body-relative offsets in world axes."""
        x, z, pitch, vx, vz, omega = self.body
        q1, q2 = self.joint_pos[0::2], self.joint_pos[1::2]
        qd1, qd2 = self.joint_vel[0::2], self.joint_vel[1::2]
        q12, qd12 = q1 + q2, qd1 + qd2
        upper, lower = self.UPPER_LENGTH, self.lower_lengths

        fx = self.HIP_OFFSETS + upper * np.sin(q1) + lower * np.sin(q12)
        fz = -upper * np.cos(q1) - lower * np.cos(q12)
        dfx = upper * np.cos(q1) * qd1 + lower * np.cos(q12) * qd12
        dfz = upper * np.sin(q1) * qd1 + lower * np.sin(q12) * qd12

        c, s = np.cos(pitch), np.sin(pitch)
        rx = c * fx - s * fz
        rz = s * fx + c * fz
        foot_vx = vx - omega * rz + (c * dfx - s * dfz)
        foot_vz = vz + omega * rx + (s * dfx + c * dfz)
        return x + rx, z + rz, foot_vx, foot_vz, rx, rz

    def _observation(self) -> np.ndarray:
        _, foot_z, _, _, _, _ = self._feet()
        contact = (foot_z < 0.0).astype(np.float64)
        feet = np.column_stack([contact, foot_z]).ravel()
        body = self.body[[1, 2, 3, 4]]
        return np.concatenate([body, self.joint_pos, 0.1 * self.joint_vel, feet])

    def reset(self, *, seed: Optional[int] = None, options: Optional[Dict[str, Any]] = None):
        super().reset(seed=seed)
        variant = (options or {}).get("variant", STANDARD_MORPHOLOGY)
        self.variant = variant
        self.lower_lengths = np.array([self.LOWER_LENGTH * variant.scale_for(limb) for limb in LIMB_IDS])

        self.joint_pos = self.REST_POSE + self.np_random.uniform(-self.RESET_NOISE, self.RESET_NOISE, size=8)
        self.joint_vel = np.zeros(8)
        q1, q2 = self.joint_pos[0::2], self.joint_pos[1::2]
        reach = self.UPPER_LENGTH * np.cos(q1) + self.lower_lengths * np.cos(q1 + q2)
        self.body = np.array([0.0, float(np.max(reach)), 0.0, 0.0, 0.0, 0.0])
        self._x0 = 0.0
        self._steps = 0
        self._done = False
        return self._observation(), {"x": 0.0, "distance": 0.0}

    def step(self, action: np.ndarray):
        if self._done:
            raise EnvironmentStateError("step() called on a finished episode; call reset() first")
        action = np.clip(np.asarray(action, dtype=np.float64), -1.0, 1.0)
        if action.shape != (8,):
            raise ArgumentError(f"SegWalker2D expects 8 actions, got shape {action.shape}")
        dt = self.DT
        x_before = self.body[0]

        # joints
        torque = self.JOINT_GEAR * action
        spring = self.JOINT_STIFFNESS * (self.joint_pos - self.REST_POSE)
        accel = (torque - spring - self.JOINT_DAMPING * self.joint_vel) / self.JOINT_INERTIA
        self.joint_vel = self.joint_vel + dt * accel
        self.joint_pos = self.joint_pos + dt * self.joint_vel
        at_limit = (self.joint_pos < self.JOINT_LOW) | (self.joint_pos > self.JOINT_HIGH)
        self.joint_pos = np.clip(self.joint_pos, self.JOINT_LOW, self.JOINT_HIGH)
        self.joint_vel = np.where(at_limit, 0.0, self.joint_vel)

        # ground contact
        _, foot_z, foot_vx, foot_vz, rx, rz = self._feet()
        depth = np.maximum(-foot_z, 0.0)
        touching = depth > 0.0
        normal = np.where(touching, np.maximum(self.GROUND_STIFFNESS * depth - self.GROUND_DAMPING * foot_vz, 0.0), 0.0)
        bound = self.FRICTION_COEF * normal
        tangential = np.where(touching, np.clip(-self.FRICTION_DAMPING * foot_vx, -bound, bound), 0.0)

        x, z, pitch, vx, vz, omega = self.body
        force_x = np.sum(tangential)
        force_z = np.sum(normal) - self.BODY_MASS * self.GRAVITY
        if z < 0.0:
            force_z += self.BODY_GROUND_STIFFNESS * (-z) - self.BODY_GROUND_DAMPING * vz
        moment = np.sum(rx * normal - rz * tangential) - self.BODY_ANGULAR_DAMPING * omega

        vx += dt * force_x / self.BODY_MASS
        vz += dt * force_z / self.BODY_MASS
        omega += dt * moment / self.BODY_INERTIA
        self.body = np.array([x + dt * vx, z + dt * vz, pitch + dt * omega, vx, vz, omega])
        self._steps += 1

        state = np.concatenate([self.body, self.joint_pos, self.joint_vel])
        unstable = not np.all(np.isfinite(state)) or np.max(np.abs(state)) > self.INSTABILITY_BOUND
        displacement = 0.0 if unstable else float(self.body[0] - x_before)
        if self.env_spec.reward_mode is RewardMode.DISTANCE_ONLY:
            reward = displacement
        else:
            upright = abs(self.body[2]) < self.UPRIGHT_PITCH and self.body[1] > self.UPRIGHT_HEIGHT
            reward = displacement / dt + (self.SURVIVAL_BONUS if upright and not unstable else 0.0)

        terminated = bool(unstable)
        truncated = self._steps >= self.env_spec.episode_steps
        self._done = terminated or truncated
        x_reported = float(x_before if unstable else self.body[0])
        info = {"x": x_reported, "distance": x_reported - float(self._x0)}
        if unstable:
            logger.warning(f"SegWalker2D became unstable at step {self._steps}")
        return self._observation(), float(reward), terminated, truncated, info


class AssocTask(gym.Env):
    """Episodic association of one-hot input patterns with fixed random targets.

    Reward per step is -||output - target||^2 for the pattern shown in the observation.
    """

    metadata = {"render_modes": []}

    TARGET_BOUND = 0.8

    def __init__(self, n_patterns: int = 4, act_dim: int = 2, task_seed: int = 0, episode_steps: int = 1000):
        super().__init__()
        self.env_spec = EnvSpec(obs_dim=n_patterns, act_dim=act_dim, episode_steps=episode_steps)
        self.observation_space = spaces.Box(0.0, 1.0, shape=(n_patterns,), dtype=np.float64)
        self.action_space = spaces.Box(-1.0, 1.0, shape=(act_dim,), dtype=np.float64)
        self.patterns = np.eye(n_patterns)
        task_rng = np.random.default_rng(task_seed)
        self.targets = task_rng.uniform(-self.TARGET_BOUND, self.TARGET_BOUND, size=(n_patterns, act_dim))
        self._current = 0
        self._steps = 0
        self._done = True

    def reset(self, *, seed: Optional[int] = None, options: Optional[Dict[str, Any]] = None):
        super().reset(seed=seed)
        variant = (options or {}).get("variant", STANDARD_MORPHOLOGY)
        if not variant.is_standard:
            raise ConfigurationError("AssocTask has no morphology; only the standard variant is accepted")
        self._current = int(self.np_random.integers(len(self.patterns)))
        self._steps = 0
        self._done = False
        return self.patterns[self._current].copy(), {"distance": 0.0}

    def step(self, action: np.ndarray):
        if self._done:
            raise EnvironmentStateError("step() called on a finished episode; call reset() first")
        action = np.clip(np.asarray(action, dtype=np.float64), -1.0, 1.0)
        error = action - self.targets[self._current]
        reward = -float(np.sum(error * error))
        self._steps += 1
        self._current = int(self.np_random.integers(len(self.patterns)))
        truncated = self._steps >= self.env_spec.episode_steps
        self._done = truncated
        return self.patterns[self._current].copy(), reward, False, truncated, {"distance": 0.0}


class EnvConfig(BaseModel):
    model_config = ConfigDict(extra="forbid")

    name: Literal["segwalker", "assoc"] = "segwalker"
    episode_steps: int = Field(default=1000, ge=1)
    reward_mode: RewardMode = RewardMode.FULL
    n_patterns: int = Field(default=4, ge=1)
    assoc_act_dim: int = Field(default=2, ge=1)
    task_seed: int = 0

    @property
    def obs_dim(self) -> int:
        return 28 if self.name == "segwalker" else self.n_patterns

    @property
    def act_dim(self) -> int:
        return 8 if self.name == "segwalker" else self.assoc_act_dim


def make_env(config: EnvConfig, reward_mode: Optional[RewardMode] = None) -> gym.Env:
    """Build a fresh environment instance (one per rollout)."""
    mode = reward_mode or config.reward_mode
    if config.name == "segwalker":
        return SegWalker2D(episode_steps=config.episode_steps, reward_mode=mode)
    return AssocTask(
        n_patterns=config.n_patterns,
        act_dim=config.assoc_act_dim,
        task_seed=config.task_seed,
        episode_steps=config.episode_steps,
    )
