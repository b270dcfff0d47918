"""Synthetic marker detector.

Replaces the image-based detector with geometry: the two mower-top markers are
projected through a pinhole camera mounted at the dock, and the detector output
is the center of each marker's axis-aligned bounding box in normalized image
coordinates ((0, 0) at the image center, +-1 at the borders, ``v`` pointing down).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from functools import lru_cache
from pathlib import Path

import numpy as np

from .sim_core import InvalidInputError, Pose, SimConfig


class ConfigurationError(ValueError):
    """Raised when a geometric configuration cannot produce a usable view."""


@dataclass(frozen=True)
class CameraModel:
    focal_px: float = 1000.0
    width_px: int = 1280
    height_px: int = 960
    cam_height: float = 0.5   # m above the mower-top plane
    cam_y: float = 2.6        # m, world y of the camera center
    aim_y: float = 1.325      # m, world y of the mower-top point on the optical axis

    def __post_init__(self):
        if self.focal_px <= 0 or self.width_px <= 0 or self.height_px <= 0:
            raise InvalidInputError("camera intrinsics must be positive")
        if self.cam_height <= 0.0 or self.cam_y <= self.aim_y:
            raise InvalidInputError("camera must sit above the mower and behind its aim point")

    @property
    def pitch(self) -> float:
        """Downward tilt of the optical axis below horizontal (rad)."""
        return math.atan2(self.cam_height, self.cam_y - self.aim_y)

    def axes(self) -> tuple[tuple[float, float, float], ...]:
        """Camera right, image-down and forward unit vectors in world coordinates."""
        s, c = math.sin(self.pitch), math.cos(self.pitch)
        right = (-1.0, 0.0, 0.0)
        down = (0.0, s, -c)
        forward = (0.0, -c, -s)
        return right, down, forward


@dataclass(frozen=True)
class MarkerLayout:
    front_offset: float = 0.55       # m forward of the rear axle (marker 1)
    rear_offset: float = 0.10        # m forward of the rear axle (marker 2)
    marker_half_size: float = 0.04   # m

    def __post_init__(self):
        if not self.front_offset > self.rear_offset >= 0.0:
            raise InvalidInputError("need front_offset > rear_offset >= 0")
        if self.marker_half_size <= 0.0:
            raise InvalidInputError("marker_half_size must be positive")


@dataclass(frozen=True)
class MarkerObservation:
    """Normalized bounding-box centers; components of an unseen marker are NaN."""

    u1: float
    v1: float
    u2: float
    v2: float
    in_view1: bool = True
    in_view2: bool = True

    def as_array(self) -> np.ndarray:
        return np.array([self.u1, self.v1, self.u2, self.v2], dtype=np.float64)


@dataclass(frozen=True)
class DetectorNoise:
    sigma_px: float = 0.0
    dropout_prob: float = 0.0

    def __post_init__(self):
        if self.sigma_px < 0.0:
            raise InvalidInputError("sigma_px must be non-negative")
        if not 0.0 <= self.dropout_prob < 1.0:
            raise InvalidInputError("dropout_prob must lie in [0, 1)")


def marker_corners(pose: Pose, offset: float, half_size: float) -> list[tuple[float, float]]:
    """World (x, y) corners of a square marker centered ``offset`` ahead of the rear axle."""
    fx, fy = math.sin(pose.theta), math.cos(pose.theta)
    lx, ly = fy, -fx
    cx, cy = pose.x + offset * fx, pose.y + offset * fy
    h = half_size
    return [
        (cx + h * fx + h * lx, cy + h * fy + h * ly),
        (cx + h * fx - h * lx, cy + h * fy - h * ly),
        (cx - h * fx - h * lx, cy - h * fy - h * ly),
        (cx - h * fx + h * lx, cy - h * fy + h * ly),
    ]


def project_point(px: float, py: float, cam: CameraModel) -> tuple[float, float, float]:
    """Project a mower-top point to (u, v, depth); u, v normalized to the half-frame."""
    right, down, forward = cam.axes()
    rx, ry, rz = px, py - cam.cam_y, -cam.cam_height
    depth = rx * forward[0] + ry * forward[1] + rz * forward[2]
    xc = rx * right[0] + ry * right[1] + rz * right[2]
    yc = rx * down[0] + ry * down[1] + rz * down[2]
    if depth <= 0.0:
        return math.nan, math.nan, depth
    u = cam.focal_px * xc / depth / (0.5 * cam.width_px)
    v = cam.focal_px * yc / depth / (0.5 * cam.height_px)
    return u, v, depth


def _marker_box(corners, cam: CameraModel) -> tuple[float, float, float, float] | None:
    us, vs = [], []
    for px, py in corners:
        u, v, depth = project_point(px, py, cam)
        if depth <= 0.0:
            return None
        us.append(u)
        vs.append(v)
    return min(us), min(vs), max(us), max(vs)


def marker_boxes(pose: Pose, layout: MarkerLayout, cam: CameraModel):
    """Normalized bounding boxes (umin, vmin, umax, vmax) of both markers, None if behind the camera."""
    return [
        _marker_box(marker_corners(pose, off, layout.marker_half_size), cam)
        for off in (layout.front_offset, layout.rear_offset)
    ]


def project_markers(pose: Pose, layout: MarkerLayout, cam: CameraModel) -> MarkerObservation:
    """Detector output for ``pose``: bounding-box centers of marker 1 (front) and 2 (rear).

    A marker is in view when all four corners lie in front of the camera and
    strictly inside the frame.
    """
    values = []
    flags = []
    for box in marker_boxes(pose, layout, cam):
        if box is None:
            values += [math.nan, math.nan]
            flags.append(False)
            continue
        umin, vmin, umax, vmax = box
        visible = -1.0 < umin and umax < 1.0 and -1.0 < vmin and vmax < 1.0
        if visible:
            values += [0.5 * (umin + umax), 0.5 * (vmin + vmax)]
        else:
            values += [math.nan, math.nan]
        flags.append(visible)
    return MarkerObservation(values[0], values[1], values[2], values[3], flags[0], flags[1])


@lru_cache(maxsize=64)
def goal_anchor_values(layout: MarkerLayout, cam: CameraModel, cfg: SimConfig) -> tuple[float, float]:
    """Marker ``v`` coordinates at the docking pose (x=0, y=y_goal, theta=0)."""
    obs = project_markers(Pose(0.0, cfg.y_goal, 0.0), layout, cam)
    if not (obs.in_view1 and obs.in_view2):
        raise ConfigurationError("goal pose is not fully in view of the camera")
    return obs.v1, obs.v2


def apply_noise(obs: MarkerObservation, noise: DetectorNoise, rng: np.random.Generator,
                cam: CameraModel) -> MarkerObservation:
    """Jitter centers by ``sigma_px`` pixels and drop each marker with ``dropout_prob``.

    Always consumes the same number of draws so random streams stay aligned.
    """
    if noise.sigma_px == 0.0 and noise.dropout_prob == 0.0:
        return obs
    jitter = rng.standard_normal(4) * noise.sigma_px
    drop = rng.random(2) < noise.dropout_prob
    su = 1.0 / (0.5 * cam.width_px)
    sv = 1.0 / (0.5 * cam.height_px)
    u1, v1 = obs.u1 + jitter[0] * su, obs.v1 + jitter[1] * sv
    u2, v2 = obs.u2 + jitter[2] * su, obs.v2 + jitter[3] * sv
    in1 = obs.in_view1 and not drop[0]
    in2 = obs.in_view2 and not drop[1]
    if not in1:
        u1 = v1 = math.nan
    if not in2:
        u2 = v2 = math.nan
    return replace(obs, u1=u1, v1=v1, u2=u2, v2=v2, in_view1=in1, in_view2=in2)


MARKER_COLORS = ((220, 30, 30), (0, 0, 0))  # marker 1 red, marker 2 black


def render_view(pose: Pose, layout: MarkerLayout, cam: CameraModel) -> np.ndarray:
    """Render the simulated camera frame: white background, two filled marker quads."""
    img = np.full((cam.height_px, cam.width_px, 3), 255, dtype=np.uint8)
    half_w, half_h = 0.5 * cam.width_px, 0.5 * cam.height_px
    for off, color in zip((layout.front_offset, layout.rear_offset), MARKER_COLORS):
        pts = []
        for px, py in marker_corners(pose, off, layout.marker_half_size):
            u, v, depth = project_point(px, py, cam)
            if depth <= 0.0:
                break
            pts.append((half_w * (1.0 + u), half_h * (1.0 + v)))
        else:
            _fill_convex(img, np.array(pts), color)
    return img


def _fill_convex(img: np.ndarray, pts: np.ndarray, color) -> None:
    h, w = img.shape[:2]
    c0 = max(int(math.floor(pts[:, 0].min())), 0)
    c1 = min(int(math.ceil(pts[:, 0].max())), w)
    r0 = max(int(math.floor(pts[:, 1].min())), 0)
    r1 = min(int(math.ceil(pts[:, 1].max())), h)
    if c0 >= c1 or r0 >= r1:
        return
    xs = np.arange(c0, c1) + 0.5
    ys = np.arange(r0, r1) + 0.5
    gx, gy = np.meshgrid(xs, ys)
    inside_pos = np.ones_like(gx, dtype=bool)
    inside_neg = np.ones_like(gx, dtype=bool)
    n = len(pts)
    for i in range(n):
        ax, ay = pts[i]
        bx, by = pts[(i + 1) % n]
        cross = (bx - ax) * (gy - ay) - (by - ay) * (gx - ax)
        inside_pos &= cross >= 0
        inside_neg &= cross <= 0
    mask = inside_pos | inside_neg
    img[r0:r1, c0:c1][mask] = color


def write_ppm(path: str | Path, img: np.ndarray) -> None:
    """Write an RGB uint8 array as a binary (P6) PPM file."""
    h, w = img.shape[:2]
    with open(path, "wb") as fh:
        fh.write(f"P6\n{w} {h}\n255\n".encode("ascii"))
        fh.write(np.ascontiguousarray(img, dtype=np.uint8).tobytes())
