"""Rear-axle unicycle kinematics for the mower.

World frame: ``y`` runs along the approach axis toward the dock, ``x`` is the
lateral offset from the dock centerline and ``theta`` is the heading measured
from the approach axis. The vehicle moves along ``(sin theta, cos theta)``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass


class InvalidInputError(ValueError):
    """Raised when a numerical input is non-finite or out of its declared range."""


def wrap_angle(theta: float) -> float:
    """Wrap an angle to the half-open interval (-pi, pi]."""
    if -math.pi < theta <= math.pi:
        return theta
    wrapped = math.fmod(theta + math.pi, 2.0 * math.pi)
    if wrapped < 0.0:
        wrapped += 2.0 * math.pi
    wrapped -= math.pi
    # fmod maps +pi onto -pi; the interval is open at -pi
    if wrapped <= -math.pi:
        wrapped += 2.0 * math.pi
    return wrapped


@dataclass(frozen=True)
class Pose:
    x: float      # m
    y: float      # m
    theta: float  # rad

    def __post_init__(self):
        _check_finite(x=self.x, y=self.y, theta=self.theta)


@dataclass(frozen=True)
class ControlAction:
    v: float      # m/s
    omega: float  # rad/s

    def __post_init__(self):
        _check_finite(v=self.v, omega=self.omega)


@dataclass(frozen=True)
class SimConfig:
    dt: float = 0.2                          # s, 5 Hz command rate
    v_max: float = 0.4                       # m/s
    omega_max: float = math.radians(30.0)    # rad/s
    y_goal: float = 1.0                      # m

    def __post_init__(self):
        _check_finite(dt=self.dt, v_max=self.v_max, omega_max=self.omega_max, y_goal=self.y_goal)
        if self.dt <= 0.0:
            raise InvalidInputError(f"dt must be positive, got {self.dt}")
        if self.y_goal <= 0.0:
            raise InvalidInputError(f"y_goal must be positive, got {self.y_goal}")
        if self.v_max <= 0.0 or self.omega_max <= 0.0:
            raise InvalidInputError("v_max and omega_max must be positive")

    def check_action(self, action: ControlAction) -> None:
        tol = 1e-12
        if not (-tol <= action.v <= self.v_max + tol):
            raise InvalidInputError(f"v={action.v} outside [0, {self.v_max}]")
        if abs(action.omega) > self.omega_max + tol:
            raise InvalidInputError(f"|omega|={abs(action.omega)} exceeds {self.omega_max}")


def _check_finite(**values: float) -> None:
    for name, value in values.items():
        if not math.isfinite(value):
            raise InvalidInputError(f"{name} must be finite, got {value}")


def _derivs(theta: float, v: float, omega: float) -> tuple[float, float, float]:
    return v * math.sin(theta), v * math.cos(theta), omega


def step(pose: Pose, action: ControlAction, dt: float, substeps: int = 1,
         cfg: SimConfig | None = None) -> Pose:
    """Advance ``pose`` by ``dt`` seconds under a constant command.

    Integrates with classical RK4 using ``substeps`` equal sub-intervals.
    When ``cfg`` is given the action is checked against its bounds.
    """
    _check_finite(dt=dt)
    if dt <= 0.0:
        raise InvalidInputError(f"dt must be positive, got {dt}")
    if substeps < 1:
        raise InvalidInputError(f"substeps must be >= 1, got {substeps}")
    if cfg is not None:
        cfg.check_action(action)

    v, omega = action.v, action.omega
    x, y, th = pose.x, pose.y, pose.theta
    h = dt / substeps
    for _ in range(substeps):
        k1 = _derivs(th, v, omega)
        k2 = _derivs(th + 0.5 * h * k1[2], v, omega)
        k3 = _derivs(th + 0.5 * h * k2[2], v, omega)
        k4 = _derivs(th + h * k3[2], v, omega)
        x += h / 6.0 * (k1[0] + 2.0 * k2[0] + 2.0 * k3[0] + k4[0])
        y += h / 6.0 * (k1[1] + 2.0 * k2[1] + 2.0 * k3[1] + k4[1])
        th += h / 6.0 * (k1[2] + 2.0 * k2[2] + 2.0 * k3[2] + k4[2])
    return Pose(x, y, wrap_angle(th))


def is_done(pose: Pose, cfg: SimConfig) -> bool:
    """True once the rear axle has reached the stop line."""
    return pose.y >= cfg.y_goal
