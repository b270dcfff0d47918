"""Flat ``key = value`` configuration files.

Angles are given in degrees in the file and converted to radians on load.
Lines starting with ``#`` or ``;`` are comments. Unknown keys are rejected.
"""

from __future__ import annotations

import configparser
import math
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Any, Mapping

from .dqn import TrainerConfig
from .env import DEFAULT_PHASES, ActionTable, DockingEnv, EpisodeConfig, PhaseConfig
from .sim_core import SimConfig
from .vision_sim import CameraModel, DetectorNoise, MarkerLayout


@dataclass
class Config:
    sim: SimConfig = field(default_factory=SimConfig)
    camera: CameraModel = field(default_factory=CameraModel)
    layout: MarkerLayout = field(default_factory=MarkerLayout)
    episode: EpisodeConfig = field(default_factory=EpisodeConfig)
    phases: tuple[PhaseConfig, ...] = DEFAULT_PHASES
    speeds: tuple[float, ...] = (0.1, 0.25, 0.4)
    rates_deg: tuple[float, ...] = (-15.0, 0.0, 15.0)
    train_noise: DetectorNoise = field(default_factory=DetectorNoise)
    eval_noise: DetectorNoise = field(default_factory=lambda: DetectorNoise(sigma_px=1.0))
    trainer: TrainerConfig = field(default_factory=TrainerConfig)

    @property
    def actions(self) -> ActionTable:
        return ActionTable.grid(self.speeds, self.rates_deg)


def _floats(text: str) -> tuple[float, ...]:
    return tuple(float(t) for t in text.replace(";", ",").split(",") if t.strip())


def _range(text: str, scale: float = 1.0) -> tuple[float, float]:
    lo, hi = _floats(text)
    return lo * scale, hi * scale


def _opt_float(text: str) -> float | None:
    return None if text.strip().lower() in ("", "none") else float(text)


def _opt_floats(text: str) -> tuple[float, ...] | None:
    if text.strip().lower() in ("", "none"):
        return None
    return tuple(float(t) for t in text.replace(";", ",").split(",") if t.strip())


def _opt_ints(text: str) -> tuple[int, ...] | None:
    if text.strip().lower() in ("", "none"):
        return None
    return tuple(int(t) for t in text.replace(";", ",").split(",") if t.strip())


# key -> (section, attribute, parser)
_DEG = math.pi / 180.0
_KEYS: dict[str, tuple[str, str, Any]] = {
    "dt": ("sim", "dt", float),
    "v_max": ("sim", "v_max", float),
    "omega_max_deg": ("sim", "omega_max", lambda s: float(s) * _DEG),
    "y_goal": ("sim", "y_goal", float),
    "focal_px": ("camera", "focal_px", float),
    "width_px": ("camera", "width_px", int),
    "height_px": ("camera", "height_px", int),
    "cam_height": ("camera", "cam_height", float),
    "cam_y": ("camera", "cam_y", float),
    "aim_y": ("camera", "aim_y", float),
    "front_offset": ("layout", "front_offset", float),
    "rear_offset": ("layout", "rear_offset", float),
    "marker_half_size": ("layout", "marker_half_size", float),
    "init_x": ("episode", "x_range", _range),
    "init_y": ("episode", "y_range", _range),
    "init_theta_deg": ("episode", "theta_range", lambda s: _range(s, _DEG)),
    "max_steps": ("episode", "max_steps", int),
    "train_sigma_px": ("train_noise", "sigma_px", float),
    "train_dropout_prob": ("train_noise", "dropout_prob", float),
    "sigma_px": ("eval_noise", "sigma_px", float),
    "dropout_prob": ("eval_noise", "dropout_prob", float),
    "gamma": ("trainer", "gamma", float),
    "tau": ("trainer", "tau", float),
    "batch_size": ("trainer", "batch_size", int),
    "capacity": ("trainer", "capacity", int),
    "eps_start": ("trainer", "eps_start", float),
    "eps_end": ("trainer", "eps_end", float),
    "eps_decay_frac": ("trainer", "eps_decay_frac", float),
    "phase_episode_budget": ("trainer", "phase_episode_budget", int),
    "window": ("trainer", "window", int),
    "updates_per_step": ("trainer", "updates_per_step", int),
    "lr": ("trainer", "lr", float),
    "lr_end": ("trainer", "lr_end", _opt_floats),
    "optimizer": ("trainer", "optimizer", str),
    "momentum": ("trainer", "momentum", float),
    "grad_clip": ("trainer", "grad_clip", _opt_float),
    "validate_every": ("trainer", "validate_every", int),
    "validate_episodes": ("trainer", "validate_episodes", int),
    "reward_scale": ("trainer", "reward_scale", float),
    "obs_scale": ("trainer", "obs_scale", float),
    "phase_budgets": ("trainer", "phase_budgets", _opt_ints),
    "phase_min_episodes": ("trainer", "phase_min_episodes", _opt_ints),
    "seed": ("trainer", "seed", int),
}
# keys handled outside the table
_SPECIAL = {"action_speeds", "action_rates_deg", "phase_c1", "phase_c2", "phase_R", "phase_thresholds"}


def parse_config(values: Mapping[str, str], base: Config | None = None) -> Config:
    """Build a Config from string key/value pairs layered over ``base`` (defaults if None)."""
    cfg = base or Config()
    unknown = set(values) - set(_KEYS) - _SPECIAL
    if unknown:
        raise ValueError(f"unknown config keys: {', '.join(sorted(unknown))}")
    updates: dict[str, dict[str, Any]] = {}
    for key, raw in values.items():
        if key in _KEYS:
            section, attr, parse = _KEYS[key]
            updates.setdefault(section, {})[attr] = parse(raw)
    kwargs: dict[str, Any] = {}
    for section, attrs in updates.items():
        kwargs[section] = replace(getattr(cfg, section), **attrs)
    if "action_speeds" in values:
        kwargs["speeds"] = _floats(values["action_speeds"])
    if "action_rates_deg" in values:
        kwargs["rates_deg"] = _floats(values["action_rates_deg"])
    phases = list(cfg.phases)
    for key, attr in (("phase_c1", "c1"), ("phase_c2", "c2"), ("phase_R", "R"), ("phase_thresholds", "threshold")):
        if key in values:
            vals = _floats(values[key])
            if len(vals) != len(phases):
                raise ValueError(f"{key} needs {len(phases)} values, got {len(vals)}")
            phases = [replace(p, **{attr: v}) for p, v in zip(phases, vals)]
    kwargs["phases"] = tuple(phases)
    return replace(cfg, **kwargs)


def read_config_file(path: str | Path) -> dict[str, str]:
    parser = configparser.ConfigParser(interpolation=None, comment_prefixes=("#", ";"),
                                       inline_comment_prefixes=("#",))
    parser.optionxform = str  # keep key case
    text = Path(path).read_text()
    parser.read_string("[config]\n" + text, source=str(path))
    return dict(parser["config"])


def load_config(path: str | Path | None = None, overrides: Mapping[str, Any] | None = None) -> Config:
    """Defaults, then the file at ``path``, then ``overrides`` (values of None are skipped)."""
    values: dict[str, str] = {}
    if path is not None:
        values.update(read_config_file(path))
    for k, v in (overrides or {}).items():
        if v is not None:
            values[k] = str(v)
    return parse_config(values)


def dump_config(cfg: Config) -> str:
    """Render ``cfg`` in the file format; ``load_config`` of the output reproduces it."""
    lines = []
    for key, (section, attr, _) in _KEYS.items():
        val = getattr(getattr(cfg, section), attr)
        if key == "omega_max_deg":
            val = round(math.degrees(val), 12)
        elif key == "init_theta_deg":
            val = tuple(round(math.degrees(t), 12) for t in val)
        if val is None:
            val = "none"
        elif key in ("phase_budgets", "phase_min_episodes"):
            val = ", ".join(str(t) for t in val)
        elif isinstance(val, tuple):
            val = ", ".join(repr(float(t)) for t in val)
        elif isinstance(val, float):
            val = repr(val)
        lines.append(f"{key} = {val}")
    lines.append("action_speeds = " + ", ".join(repr(float(v)) for v in cfg.speeds))
    lines.append("action_rates_deg = " + ", ".join(repr(float(v)) for v in cfg.rates_deg))
    for key, attr in (("phase_c1", "c1"), ("phase_c2", "c2"), ("phase_R", "R"), ("phase_thresholds", "threshold")):
        lines.append(f"{key} = " + ", ".join(repr(float(getattr(p, attr))) for p in cfg.phases))
    return "\n".join(lines) + "\n"


def build_env(cfg: Config, noise: DetectorNoise | None = None, record_trace: bool = False) -> DockingEnv:
    """Environment described by ``cfg``; ``noise`` defaults to the training noise."""
    return DockingEnv(sim=cfg.sim, layout=cfg.layout, cam=cfg.camera, episode=cfg.episode,
                      actions=cfg.actions, phases=cfg.phases,
                      noise=cfg.train_noise if noise is None else noise, record_trace=record_trace)
