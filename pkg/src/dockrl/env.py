"""Episodic docking MDP: reset distribution, 3-frame observation stack, curriculum rewards."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .sim_core import ControlAction, InvalidInputError, Pose, SimConfig, is_done, step
from .vision_sim import (
    CameraModel,
    ConfigurationError,
    DetectorNoise,
    MarkerLayout,
    MarkerObservation,
    apply_noise,
    goal_anchor_values,
    project_markers,
)

STACK_FRAMES = 3
OBS_DIM = 4 * STACK_FRAMES


class UsageError(RuntimeError):
    """Raised when the environment is driven outside its protocol."""


@dataclass(frozen=True)
class PhaseConfig:
    phase_index: int
    c1: float          # success band on |u|
    c2: float          # lateral penalty weight
    R: float           # terminal success reward
    threshold: float   # trailing-window mean return needed to advance


DEFAULT_PHASES: tuple[PhaseConfig, ...] = (
    PhaseConfig(1, 0.05, 2.0, 0.0, -120.0),
    PhaseConfig(2, 0.05, 5.0, 150.0, -20.0),
    PhaseConfig(3, 0.02, 5.0, 150.0, -70.0),
    PhaseConfig(4, 0.02, 10.0, 150.0, -50.0),
)


@dataclass(frozen=True)
class ActionTable:
    """Discrete action set; index is the action id."""

    actions: tuple[tuple[float, float], ...]  # (v m/s, omega rad/s)

    def __post_init__(self):
        if not self.actions:
            raise InvalidInputError("action table must be non-empty")

    def __len__(self) -> int:
        return len(self.actions)

    def __getitem__(self, i: int) -> ControlAction:
        v, w = self.actions[i]
        return ControlAction(v, w)

    @classmethod
    def grid(cls, speeds: Sequence[float], rates_deg: Sequence[float]) -> "ActionTable":
        return cls(tuple((float(v), math.radians(w)) for v in speeds for w in rates_deg))

    def check(self, cfg: SimConfig) -> None:
        for i in range(len(self)):
            cfg.check_action(self[i])

    def encoded(self, cfg: SimConfig) -> np.ndarray:
        """Network encoding of every action: (v / v_max, omega / omega_max)."""
        arr = np.array(self.actions, dtype=np.float64)
        return arr / np.array([cfg.v_max, cfg.omega_max])


DEFAULT_ACTIONS = ActionTable.grid((0.1, 0.25, 0.4), (-15.0, 0.0, 15.0))


@dataclass(frozen=True)
class EpisodeConfig:
    x_range: tuple[float, float] = (-0.2, 0.2)
    y_range: tuple[float, float] = (-0.2, 0.2)
    theta_range: tuple[float, float] = (math.radians(-30.0), math.radians(30.0))
    max_steps: int = 200
    max_reset_tries: int = 100


def compute_reward(obs: MarkerObservation, pose: Pose, phase: PhaseConfig,
                   anchors: tuple[float, float], y_goal: float = 1.0) -> float:
    """Curriculum reward for one step.

    At the stop line the reward is ``R`` inside the ``c1`` band, 0 inside the
    ``2*c1`` band; everywhere else it is the alignment penalty.
    """
    au1, au2 = abs(obs.u1), abs(obs.u2)
    if pose.y >= y_goal:
        if au1 < phase.c1 and au2 < phase.c1:
            return phase.R
        if au1 < 2.0 * phase.c1 and au2 < 2.0 * phase.c1:
            return 0.0
    v1_0, v2_0 = anchors
    return -(10.0 * abs(obs.v1 - v1_0) + 10.0 * abs(obs.v2 - v2_0) + phase.c2 * au1 + phase.c2 * au2)


def reward_branch(obs: MarkerObservation, pose: Pose, phase: PhaseConfig, y_goal: float = 1.0) -> str:
    """Name of the reward case that fires: 'success', 'band' or 'penalty'."""
    au1, au2 = abs(obs.u1), abs(obs.u2)
    if pose.y >= y_goal:
        if au1 < phase.c1 and au2 < phase.c1:
            return "success"
        if au1 < 2.0 * phase.c1 and au2 < 2.0 * phase.c1:
            return "band"
    return "penalty"


def phase_advance(returns: Sequence[float], threshold: float, window: int) -> bool:
    """True once the mean of the last ``window`` episode returns exceeds ``threshold``."""
    if window < 1:
        raise InvalidInputError("window must be >= 1")
    if len(returns) < window:
        return False
    return float(np.mean(returns[-window:])) > threshold


@dataclass
class StepInfo:
    pose: Pose
    obs: MarkerObservation
    outcome: str  # "running", "goal", "timeout" or "lost"


class DockingEnv:
    """Single-threaded docking environment; one instance per rollout stream."""

    def __init__(self, sim: SimConfig | None = None, layout: MarkerLayout | None = None,
                 cam: CameraModel | None = None, episode: EpisodeConfig | None = None,
                 actions: ActionTable = DEFAULT_ACTIONS,
                 phases: Sequence[PhaseConfig] = DEFAULT_PHASES,
                 noise: DetectorNoise | None = None, record_trace: bool = False):
        self.sim = sim or SimConfig()
        self.layout = layout or MarkerLayout()
        self.cam = cam or CameraModel()
        self.episode = episode or EpisodeConfig()
        self.actions = actions
        self.actions.check(self.sim)
        self.phases = tuple(phases)
        self.noise = noise or DetectorNoise()
        self.anchors = goal_anchor_values(self.layout, self.cam, self.sim)
        self.record_trace = record_trace
        self.phase = self.phases[0]
        self.pose: Pose | None = None
        self.rng: np.random.Generator | None = None
        self.t = 0
        self.done = True
        self.trace: list[dict] = []
        self._frames: list[np.ndarray] = []
        self._last = np.zeros(4)

    def set_phase(self, index: int) -> None:
        self.phase = next(p for p in self.phases if p.phase_index == index)

    @property
    def n_actions(self) -> int:
        return len(self.actions)

    def encoded_actions(self) -> np.ndarray:
        return self.actions.encoded(self.sim)

    def sample_pose(self, rng: np.random.Generator) -> Pose:
        ep = self.episode
        x = rng.uniform(*ep.x_range)
        y = rng.uniform(*ep.y_range)
        th = rng.uniform(*ep.theta_range)
        return Pose(float(x), float(y), float(th))

    def reset(self, rng: np.random.Generator, episode: EpisodeConfig | None = None) -> np.ndarray:
        """Sample a start pose (resampling poses the camera cannot see) and return the stack."""
        if episode is not None:
            self.episode = episode
        for _ in range(self.episode.max_reset_tries):
            pose = self.sample_pose(rng)
            obs = project_markers(pose, self.layout, self.cam)
            if obs.in_view1 and obs.in_view2:
                return self.reset_to(pose, rng)
        raise ConfigurationError("could not sample an initial pose with both markers in view")

    def reset_to(self, pose: Pose, rng: np.random.Generator) -> np.ndarray:
        """Start an episode from a given pose."""
        clean = project_markers(pose, self.layout, self.cam)
        if not (clean.in_view1 and clean.in_view2):
            raise ConfigurationError(f"initial pose {pose} is out of view")
        self.rng = rng
        self.pose = pose
        self.t = 0
        self.done = False
        obs = apply_noise(clean, self.noise, rng, self.cam)
        # a marker dropped on the very first frame falls back to its clean center
        self._last = clean.as_array()
        frame = self._fill(obs)
        self._frames = [frame] * STACK_FRAMES
        self.trace = []
        if self.record_trace:
            self._record(-1, 0.0, frame)
        return self.stack()

    def stack(self) -> np.ndarray:
        return np.concatenate(self._frames)

    def _fill(self, obs: MarkerObservation) -> np.ndarray:
        arr = obs.as_array()
        if obs.in_view1:
            self._last[0:2] = arr[0:2]
        if obs.in_view2:
            self._last[2:4] = arr[2:4]
        return self._last.copy()

    def step(self, action_id: int) -> tuple[np.ndarray, float, bool]:
        stack, reward, done, _ = self.step_info(action_id)
        return stack, reward, done

    def step_info(self, action_id: int) -> tuple[np.ndarray, float, bool, StepInfo]:
        if self.done or self.pose is None:
            raise UsageError("step() called on a finished episode; call reset() first")
        if not 0 <= action_id < len(self.actions):
            raise UsageError(f"invalid action id {action_id}")
        self.pose = step(self.pose, self.actions[action_id], self.sim.dt)
        self.t += 1
        clean = project_markers(self.pose, self.layout, self.cam)
        obs = apply_noise(clean, self.noise, self.rng, self.cam)
        frame = self._fill(obs)
        self._frames = self._frames[1:] + [frame]
        filled = MarkerObservation(*frame.tolist(), obs.in_view1, obs.in_view2)
        reward = compute_reward(filled, self.pose, self.phase, self.anchors, self.sim.y_goal)

        if is_done(self.pose, self.sim):
            outcome = "goal"
        elif not (clean.in_view1 or clean.in_view2):
            outcome = "lost"
        elif self.t >= self.episode.max_steps:
            outcome = "timeout"
        else:
            outcome = "running"
        self.done = outcome != "running"
        if self.record_trace:
            self._record(action_id, reward, frame)
        return self.stack(), reward, self.done, StepInfo(self.pose, filled, outcome)

    def _record(self, action_id: int, reward: float, frame: np.ndarray) -> None:
        p = self.pose
        self.trace.append({
            "t": self.t, "x": p.x, "y": p.y, "theta": p.theta, "action": action_id,
            "reward": reward, "u1": frame[0], "v1": frame[1], "u2": frame[2], "v2": frame[3],
        })


TRACE_FIELDS = ["t", "x", "y", "theta", "action", "reward", "u1", "v1", "u2", "v2"]


def write_trace_csv(path, trace: Sequence[dict]) -> None:
    """Export an episode trace; the reset row carries action -1."""
    with open(path, "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=TRACE_FIELDS)
        writer.writeheader()
        for row in trace:
            writer.writerow({k: repr(v) if isinstance(v, float) else v for k, v in row.items()})
