"""Double DQN with a uniform replay buffer, soft target updates and a reward curriculum."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from . import neural
from .env import OBS_DIM, DockingEnv, phase_advance
from .neural import OptimizerState, Params
from .sim_core import InvalidInputError

log = logging.getLogger(__name__)


class CurriculumAbort(RuntimeError):
    """A phase failed to reach its threshold within its episode budget."""

    def __init__(self, message: str, params: Params, log_rows: list[dict]):
        super().__init__(message)
        self.params = params
        self.log_rows = log_rows


@dataclass
class Transition:
    state: np.ndarray
    action_id: int
    reward: float
    next_state: np.ndarray
    done: bool


class ReplayBuffer:
    """Fixed-capacity FIFO ring of transitions with uniform sampling."""

    def __init__(self, capacity: int, obs_dim: int = OBS_DIM):
        if capacity < 1:
            raise InvalidInputError("capacity must be >= 1")
        self.capacity = capacity
        self.states = np.zeros((capacity, obs_dim))
        self.next_states = np.zeros((capacity, obs_dim))
        self.actions = np.zeros(capacity, dtype=np.int64)
        self.rewards = np.zeros(capacity)
        self.dones = np.zeros(capacity, dtype=bool)
        self._next = 0
        self._size = 0

    def __len__(self) -> int:
        return self._size

    def add(self, tr: Transition) -> None:
        if not np.isfinite(tr.reward):
            raise InvalidInputError("reward must be finite")
        i = self._next
        self.states[i] = tr.state
        self.actions[i] = tr.action_id
        self.rewards[i] = tr.reward
        self.next_states[i] = tr.next_state
        self.dones[i] = tr.done
        self._next = (i + 1) % self.capacity
        self._size = min(self._size + 1, self.capacity)

    def clear(self) -> None:
        self._next = 0
        self._size = 0

    def _ordered(self) -> np.ndarray:
        start = (self._next - self._size) % self.capacity
        return (start + np.arange(self._size)) % self.capacity

    def transitions(self) -> list[Transition]:
        """Stored transitions, oldest first."""
        return [Transition(self.states[i].copy(), int(self.actions[i]), float(self.rewards[i]),
                           self.next_states[i].copy(), bool(self.dones[i]))
                for i in self._ordered()]

    def sample_indices(self, rng: np.random.Generator, batch_size: int) -> np.ndarray:
        """Uniform draw (with replacement) of ages 0..size-1, mapped to storage slots."""
        if self._size == 0:
            raise InvalidInputError("cannot sample from an empty buffer")
        return self._ordered()[rng.integers(0, self._size, size=batch_size)]

    def sample(self, rng: np.random.Generator, batch_size: int) -> dict[str, np.ndarray]:
        idx = self.sample_indices(rng, batch_size)
        return {
            "states": self.states[idx], "actions": self.actions[idx], "rewards": self.rewards[idx],
            "next_states": self.next_states[idx], "dones": self.dones[idx],
        }


@dataclass
class TrainerConfig:
    gamma: float = 0.995
    tau: float = 0.005
    batch_size: int = 64
    capacity: int = 50_000
    eps_start: float = 1.0
    eps_end: float = 0.05
    eps_decay_frac: float = 0.6        # of each phase's episode budget
    phase_episode_budget: int = 5000
    phase_budgets: tuple[int, ...] | None = (1000, 1000, 2000, 16000)  # overrides phase_episode_budget
    phase_min_episodes: tuple[int, ...] | None = (800, 800, 1600, 13000)  # before a phase may advance
    window: int = 50
    updates_per_step: int = 1
    lr: float = 3e-4
    lr_end: tuple[float, ...] | None = (3e-4, 3e-4, 3e-4, 1e-5)  # per phase: linear anneal target
    optimizer: str = "adam"
    momentum: float = 0.9
    grad_clip: float | None = None
    validate_every: int = 0            # episodes between greedy validations; 0 disables snapshot selection
    validate_episodes: int = 100
    reward_scale: float = 0.01         # rewards are multiplied by this before TD regression
    obs_scale: float = 10.0            # network input = obs_scale * (stack - goal stack)
    seed: int = 0

    def __post_init__(self):
        if not 0.0 < self.gamma <= 1.0:
            raise InvalidInputError("gamma must lie in (0, 1]")
        if not 0.0 < self.tau < 1.0:
            raise InvalidInputError("tau must lie in (0, 1)")
        if self.batch_size > self.capacity:
            raise InvalidInputError("batch_size must not exceed capacity")
        if self.validate_every < 0 or self.validate_episodes < 1:
            raise InvalidInputError("validate_every must be >= 0 and validate_episodes >= 1")
        if not self.lr > 0.0 or (self.lr_end is not None and not min(self.lr_end) > 0.0):
            raise InvalidInputError("learning rates must be positive")
        if self.phase_budgets is not None and min(self.phase_budgets) < 1:
            raise InvalidInputError("phase budgets must be >= 1")
        for name in ("phase_budgets", "phase_min_episodes", "lr_end"):
            val = getattr(self, name)
            if val is not None and len(val) != 4:
                raise InvalidInputError(f"{name} needs one value per phase")

    def min_episodes(self, phase_index: int) -> int:
        return self.phase_min_episodes[phase_index - 1] if self.phase_min_episodes is not None else 0

    def budget(self, phase_index: int) -> int:
        if self.phase_budgets is not None:
            return self.phase_budgets[phase_index - 1]
        return self.phase_episode_budget

    def epsilon(self, episode_in_phase: int, phase_index: int = 1) -> float:
        """Linear decay from eps_start to eps_end over the first eps_decay_frac of a phase."""
        horizon = max(1.0, self.eps_decay_frac * self.budget(phase_index))
        frac = min(1.0, episode_in_phase / horizon)
        return self.eps_start + frac * (self.eps_end - self.eps_start)

    def learning_rate(self, episode_in_phase: int, phase_index: int = 1) -> float:
        if self.lr_end is None:
            return self.lr
        # the anneal ends where the phase may first advance, or at the budget without a minimum
        horizon = self.min_episodes(phase_index) or self.budget(phase_index)
        frac = min(1.0, episode_in_phase / max(1, horizon))
        return self.lr + frac * (self.lr_end[phase_index - 1] - self.lr)


class StateEncoder:
    """Fixed affine map from the raw observation stack to network input."""

    def __init__(self, shift: np.ndarray, scale: float):
        self.shift = np.asarray(shift, dtype=np.float64)
        self.scale = float(scale)

    @classmethod
    def for_env(cls, env: DockingEnv, scale: float) -> "StateEncoder":
        v1_0, v2_0 = env.anchors
        return cls(np.tile([0.0, v1_0, 0.0, v2_0], OBS_DIM // 4), scale)

    def __call__(self, stack: np.ndarray) -> np.ndarray:
        return self.scale * (stack - self.shift)


def select_action(params: Params, obs: np.ndarray, eps: float, rng: np.random.Generator,
                  actions_enc: np.ndarray) -> int:
    """Epsilon-greedy over the action table."""
    if not 0.0 <= eps <= 1.0:
        raise InvalidInputError("epsilon must lie in [0, 1]")
    if rng.random() < eps:
        return int(rng.integers(len(actions_enc)))
    return neural.argmax_action(params, obs, actions_enc)


def double_dqn_target(batch: dict[str, np.ndarray], primary: Params, target: Params,
                      gamma: float, actions_enc: np.ndarray) -> np.ndarray:
    """r + gamma * Q_target(s', argmax_a Q_primary(s', a)); no bootstrap through terminal steps."""
    rewards = np.asarray(batch["rewards"], dtype=np.float64)
    if rewards.size == 0:
        raise InvalidInputError("empty batch")
    next_states = np.atleast_2d(batch["next_states"])
    best = np.argmax(neural.q_all_actions(primary, next_states, actions_enc), axis=1)
    q_next, _ = neural.forward(target, next_states, actions_enc[best])
    live = ~np.asarray(batch["dones"], dtype=bool)
    return rewards + gamma * np.where(live, q_next, 0.0)


def vanilla_dqn_target(batch: dict[str, np.ndarray], target: Params, gamma: float,
                       actions_enc: np.ndarray) -> np.ndarray:
    """Max-over-target bootstrap, kept for comparison with the decoupled target."""
    q_next = neural.q_all_actions(target, np.atleast_2d(batch["next_states"]), actions_enc).max(axis=1)
    live = ~np.asarray(batch["dones"], dtype=bool)
    return np.asarray(batch["rewards"], dtype=np.float64) + gamma * np.where(live, q_next, 0.0)


def td_loss_and_grads(batch, primary: Params, target: Params, gamma: float,
                      actions_enc: np.ndarray) -> tuple[float, Params, np.ndarray, np.ndarray]:
    """Mean squared TD error over the batch, its gradient, the targets and the predictions."""
    targets = double_dqn_target(batch, primary, target, gamma, actions_enc)
    pred, cache = neural.forward(primary, batch["states"], actions_enc[batch["actions"]])
    err = pred - targets
    loss = float(np.mean(err * err))
    grads = neural.backward(primary, cache, 2.0 * err / err.size)
    return loss, grads, targets, pred


def train_step(buffer: ReplayBuffer, primary: Params, target: Params, cfg: TrainerConfig,
               rng: np.random.Generator, opt: OptimizerState, actions_enc: np.ndarray,
               encoder: StateEncoder | None = None) -> float | None:
    """One minibatch gradient step on the primary network; None when the buffer is underfull."""
    if len(buffer) < cfg.batch_size:
        return None
    batch = buffer.sample(rng, cfg.batch_size)
    if encoder is not None:
        batch["states"] = encoder(batch["states"])
        batch["next_states"] = encoder(batch["next_states"])
    batch["rewards"] = batch["rewards"] * cfg.reward_scale
    loss, grads, _, _ = td_loss_and_grads(batch, primary, target, cfg.gamma, actions_enc)
    neural.sgd_step(primary, grads, opt)
    return loss


def soft_update(primary: Params, target: Params, tau: float) -> Params:
    """Return tau * primary + (1 - tau) * target."""
    if set(primary) != set(target):
        raise InvalidInputError("parameter sets differ")
    out: Params = {}
    for k, p in primary.items():
        if p.shape != target[k].shape:
            raise InvalidInputError(f"shape mismatch for {k}")
        out[k] = tau * p + (1.0 - tau) * target[k]
    return out


LOG_FIELDS = ["episode", "phase", "return", "epsilon", "loss_mean", "steps", "outcome"]


@dataclass
class TrainingResult:
    params: Params
    log: list[dict] = field(default_factory=list)
    phase_episodes: dict[int, int] = field(default_factory=dict)
    validation: list[tuple[int, int, float]] = field(default_factory=list)  # (episode, phase, offset score)


def run_episode(env: DockingEnv, primary: Params, target: Params, buffer: ReplayBuffer,
                cfg: TrainerConfig, opt: OptimizerState, eps: float, rng: np.random.Generator,
                actions_enc: np.ndarray, encoder: StateEncoder) -> tuple[float, Params, list[float], int, str]:
    """Roll out one episode, interleaving environment steps with update steps."""
    state = env.reset(rng)
    ret = 0.0
    losses: list[float] = []
    outcome = "running"
    steps = 0
    while True:
        a = select_action(primary, encoder(state), eps, rng, actions_enc)
        nxt, r, done, info = env.step_info(a)
        buffer.add(Transition(state, a, r, nxt, done))
        ret += r
        steps += 1
        for _ in range(cfg.updates_per_step):
            loss = train_step(buffer, primary, target, cfg, rng, opt, actions_enc, encoder)
            if loss is not None:
                losses.append(loss)
                target = soft_update(primary, target, cfg.tau)
        state = nxt
        if done:
            outcome = info.outcome
            break
    return ret, target, losses, steps, outcome


def validation_starts(env: DockingEnv, seed: int, n: int) -> list:
    """Fixed start poses for greedy validation, drawn from the training start distribution."""
    rng = np.random.default_rng([seed, 0x5A11])
    return [env.sample_pose(rng) for _ in range(n)]


def greedy_offsets(env: DockingEnv, params: Params, starts: Sequence, seed: int,
                   actions_enc: np.ndarray, encoder: StateEncoder) -> float:
    """Mean final |X| (cm) plus mean final |theta| (deg) of the greedy policy; lower is better.

    An episode that ends anywhere but the stop line scores a fixed 100.
    """
    total = 0.0
    for i, pose in enumerate(starts):
        state = env.reset_to(pose, np.random.default_rng([seed, 0x5A11, i]))
        while True:
            state, _, done, info = env.step_info(neural.argmax_action(params, encoder(state), actions_enc))
            if done:
                break
        if info.outcome == "goal":
            total += 100.0 * abs(info.pose.x) + abs(math.degrees(info.pose.theta))
        else:
            total += 100.0
    return total / len(starts)


def run_curriculum(cfg: TrainerConfig, env: DockingEnv, rng: np.random.Generator | None = None,
                   on_phase_end: Callable[[int, Params], None] | None = None) -> TrainingResult:
    """Train through every phase of ``env.phases`` in order.

    Weights carry across phases; the replay buffer and epsilon schedule restart
    at each phase. Raises :class:`CurriculumAbort` if a phase exhausts its budget.

    With ``cfg.validate_every > 0`` the greedy policy is scored every that many
    episodes (and at the phase end) by its final offsets from fixed validation
    starts, and the phase hands on its best-scoring weights instead of the last ones.
    """
    rng = rng if rng is not None else np.random.default_rng(cfg.seed)
    actions_enc = env.encoded_actions()
    encoder = StateEncoder.for_env(env, cfg.obs_scale)
    primary = neural.init_params(rng)
    target = neural.copy_params(primary)
    opt = OptimizerState(lr=cfg.lr, kind=cfg.optimizer, momentum=cfg.momentum, grad_clip=cfg.grad_clip)
    buffer = ReplayBuffer(cfg.capacity)
    result = TrainingResult(primary)
    episode = 0
    starts = validation_starts(env, cfg.seed, cfg.validate_episodes) if cfg.validate_every > 0 else []
    for phase in env.phases:
        env.set_phase(phase.phase_index)
        buffer.clear()
        returns: list[float] = []
        advanced = False
        best_score, best_params = math.inf, None
        budget = cfg.budget(phase.phase_index)
        for k in range(budget):
            eps = cfg.epsilon(k, phase.phase_index)
            opt.lr = cfg.learning_rate(k, phase.phase_index)
            ret, target, losses, steps, outcome = run_episode(
                env, primary, target, buffer, cfg, opt, eps, rng, actions_enc, encoder)
            returns.append(ret)
            episode += 1
            result.log.append({
                "episode": episode, "phase": phase.phase_index, "return": ret, "epsilon": eps,
                "loss_mean": float(np.mean(losses)) if losses else float("nan"),
                "steps": steps, "outcome": outcome,
            })
            if len(returns) >= cfg.min_episodes(phase.phase_index) and \
                    phase_advance(returns, phase.threshold, cfg.window):
                advanced = True
            if starts and (advanced or (k + 1) % cfg.validate_every == 0):
                score = greedy_offsets(env, primary, starts, cfg.seed, actions_enc, encoder)
                result.validation.append((episode, phase.phase_index, score))
                if score < best_score:
                    best_score, best_params = score, neural.copy_params(primary)
            if advanced:
                break
        if advanced and best_params is not None:
            # continue from the best validated weights
            for k in primary:
                primary[k][...] = best_params[k]
            target = neural.copy_params(primary)
        result.phase_episodes[phase.phase_index] = len(returns)
        window_mean = float(np.mean(returns[-cfg.window:]))
        log.info("phase %d: %d episodes, trailing mean return %.2f", phase.phase_index, len(returns), window_mean)
        if on_phase_end is not None:
            on_phase_end(phase.phase_index, primary)
        if not advanced:
            raise CurriculumAbort(
                f"phase {phase.phase_index} did not exceed threshold {phase.threshold} "
                f"within {budget} episodes (trailing mean {window_mean:.2f})",
                primary, result.log)
    result.params = primary
    return result
