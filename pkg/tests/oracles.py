"""Reference implementations used only by the tests.

They are written independently of the package code paths they check.
"""

import math

import numpy as np


def camera_matrix(cam):
    """3x4 pinhole projection K [R | -R C] built from elementary rotations."""
    k = np.array([[cam.focal_px, 0.0, cam.width_px / 2.0],
                  [0.0, cam.focal_px, cam.height_px / 2.0],
                  [0.0, 0.0, 1.0]])
    # camera looking along -y with z up: x_cam = -x, y_cam = -z, z_cam = -y
    base = np.array([[-1.0, 0.0, 0.0], [0.0, 0.0, -1.0], [0.0, -1.0, 0.0]])
    phi = math.atan2(cam.cam_height, cam.cam_y - cam.aim_y)
    tilt = np.array([[1.0, 0.0, 0.0],
                     [0.0, math.cos(phi), -math.sin(phi)],
                     [0.0, math.sin(phi), math.cos(phi)]])
    rot = tilt @ base
    center = np.array([0.0, cam.cam_y, cam.cam_height])
    return k @ np.hstack([rot, (-rot @ center)[:, None]])


def marker_quad_world(x, y, theta, offset, half):
    """Corners of the marker square in world coordinates (z = 0), counter-ordered."""
    rot = np.array([[math.cos(theta), math.sin(theta)], [-math.sin(theta), math.cos(theta)]])
    # body frame: first axis lateral, second axis forward
    local = np.array([[half, offset + half], [-half, offset + half],
                      [-half, offset - half], [half, offset - half]])
    pts = local @ rot.T + np.array([x, y])
    return np.hstack([pts, np.zeros((4, 1))])


def project_pixels(pmat, world_pts):
    h = np.hstack([world_pts, np.ones((len(world_pts), 1))]) @ pmat.T
    return h[:, :2] / h[:, 2:3], h[:, 2]


def _intervals(poly, axis):
    return (poly @ axis).min(), (poly @ axis).max()


def rasterize_bbox(poly, width, height):
    """Conservative rasterization of a convex polygon given in pixel coordinates.

    A pixel [i, i+1) x [j, j+1) is covered when it intersects the polygon
    (separating-axis test). Returns the covered pixels' bounding box center in
    continuous pixel coordinates, or None when nothing is covered.
    """
    c0 = max(int(math.floor(poly[:, 0].min())) - 2, 0)
    c1 = min(int(math.ceil(poly[:, 0].max())) + 2, width)
    r0 = max(int(math.floor(poly[:, 1].min())) - 2, 0)
    r1 = min(int(math.ceil(poly[:, 1].max())) + 2, height)
    ii, jj = np.meshgrid(np.arange(c0, c1), np.arange(r0, r1))
    ii, jj = ii.ravel().astype(float), jj.ravel().astype(float)
    covered = np.ones(ii.shape, dtype=bool)
    # pixel-square axes
    covered &= (poly[:, 0].max() >= ii) & (poly[:, 0].min() <= ii + 1.0)
    covered &= (poly[:, 1].max() >= jj) & (poly[:, 1].min() <= jj + 1.0)
    # polygon edge normals
    n = len(poly)
    for e in range(n):
        d = poly[(e + 1) % n] - poly[e]
        axis = np.array([-d[1], d[0]])
        pmin, pmax = _intervals(poly, axis)
        corners = np.stack([ii * axis[0] + jj * axis[1],
                            (ii + 1) * axis[0] + jj * axis[1],
                            ii * axis[0] + (jj + 1) * axis[1],
                            (ii + 1) * axis[0] + (jj + 1) * axis[1]])
        covered &= (corners.max(axis=0) >= pmin) & (corners.min(axis=0) <= pmax)
    if not covered.any():
        return None
    ci, cj = ii[covered], jj[covered]
    return (ci.min() + ci.max() + 1.0) / 2.0, (cj.min() + cj.max() + 1.0) / 2.0


def rasterized_centers(pose, layout, cam):
    """Bounding-box centers (pixel coordinates) of both markers from the rasterizer."""
    pmat = camera_matrix(cam)
    out = []
    for off in (layout.front_offset, layout.rear_offset):
        quad = marker_quad_world(pose.x, pose.y, pose.theta, off, layout.marker_half_size)
        px, depth = project_pixels(pmat, quad)
        assert (depth > 0).all()
        out.append(rasterize_bbox(px, cam.width_px, cam.height_px))
    return out


def reference_q(params, obs, act):
    """Straight-line single-sample Q evaluation with explicit loops."""
    w1, b1 = params["obs_w1"], params["obs_b1"]
    w2, b2 = params["obs_w2"], params["obs_b2"]
    wa, ba = params["act_w"], params["act_b"]
    wo, bo = params["out_w"], params["out_b"]
    h1 = []
    for i in range(w1.shape[0]):
        s = b1[i]
        for j in range(w1.shape[1]):
            s += w1[i, j] * obs[j]
        h1.append(max(s, 0.0))
    q = bo[0]
    for i in range(w2.shape[0]):
        s = b2[i] + ba[i]
        for j in range(w2.shape[1]):
            s += w2[i, j] * h1[j]
        for j in range(wa.shape[1]):
            s += wa[i, j] * act[j]
        q += wo[0, i] * max(s, 0.0)
    return q
