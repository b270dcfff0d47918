"""Dual-head Q-network written directly in numpy.

Observation head: 12 -> 16 (ReLU) -> 32. Action head: 2 -> 32. The two 32-wide
pre-activations are summed, passed through a ReLU, and a linear 32 -> 1 layer
produces the scalar Q(s, a). All functions accept batches: ``obs`` has shape
(N, 12) and ``act`` shape (N, 2); single samples are promoted.
"""

from __future__ import annotations

import math
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .sim_core import InvalidInputError

OBS_DIM = 12
ACT_DIM = 2
HIDDEN1 = 16
HIDDEN2 = 32

# (name, shape); also the checkpoint tensor order
LAYOUT: tuple[tuple[str, tuple[int, ...]], ...] = (
    ("obs_w1", (HIDDEN1, OBS_DIM)),
    ("obs_b1", (HIDDEN1,)),
    ("obs_w2", (HIDDEN2, HIDDEN1)),
    ("obs_b2", (HIDDEN2,)),
    ("act_w", (HIDDEN2, ACT_DIM)),
    ("act_b", (HIDDEN2,)),
    ("out_w", (1, HIDDEN2)),
    ("out_b", (1,)),
)
# fan-in used for initialization of each weight matrix
_FAN_IN = {"obs_w1": OBS_DIM, "obs_w2": HIDDEN1, "act_w": ACT_DIM, "out_w": HIDDEN2}

Params = dict[str, np.ndarray]


def init_params(rng: np.random.Generator) -> Params:
    """He-scaled uniform weights, U(-sqrt(6/fan_in), sqrt(6/fan_in)); zero biases."""
    params: Params = {}
    for name, shape in LAYOUT:
        if name in _FAN_IN:
            bound = math.sqrt(6.0 / _FAN_IN[name])
            params[name] = rng.uniform(-bound, bound, size=shape)
        else:
            params[name] = np.zeros(shape)
    return params


def init_bound(name: str) -> float:
    return math.sqrt(6.0 / _FAN_IN[name]) if name in _FAN_IN else 0.0


def zeros_like(params: Params) -> Params:
    return {k: np.zeros_like(v) for k, v in params.items()}


def copy_params(params: Params) -> Params:
    return {k: v.copy() for k, v in params.items()}


def _as_batch(obs, act) -> tuple[np.ndarray, np.ndarray]:
    obs = np.atleast_2d(np.asarray(obs, dtype=np.float64))
    act = np.atleast_2d(np.asarray(act, dtype=np.float64))
    if obs.shape[1] != OBS_DIM or act.shape[1] != ACT_DIM or obs.shape[0] != act.shape[0]:
        raise InvalidInputError(f"bad input shapes obs={obs.shape} act={act.shape}")
    if not (np.isfinite(obs).all() and np.isfinite(act).all()):
        raise InvalidInputError("non-finite network input")
    return obs, act


def forward(params: Params, obs: np.ndarray, act: np.ndarray):
    """Batched forward pass; returns (q of shape (N,), cache for ``backward``)."""
    z1 = obs @ params["obs_w1"].T + params["obs_b1"]
    h1 = np.maximum(z1, 0.0)
    z2 = h1 @ params["obs_w2"].T + params["obs_b2"] + act @ params["act_w"].T + params["act_b"]
    h2 = np.maximum(z2, 0.0)
    q = h2 @ params["out_w"][0] + params["out_b"][0]
    return q, (obs, act, z1, h1, z2, h2)


def backward(params: Params, cache, dq: np.ndarray) -> Params:
    """Gradients of sum_i dq[i] * q_i with respect to every parameter."""
    obs, act, z1, h1, z2, h2 = cache
    dq = np.asarray(dq, dtype=np.float64).reshape(-1)
    grads: Params = {
        "out_w": (dq @ h2)[None, :],
        "out_b": np.array([dq.sum()]),
    }
    dz2 = np.outer(dq, params["out_w"][0]) * (z2 > 0.0)
    grads["obs_w2"] = dz2.T @ h1
    grads["obs_b2"] = dz2.sum(axis=0)
    grads["act_w"] = dz2.T @ act
    grads["act_b"] = dz2.sum(axis=0)
    dz1 = (dz2 @ params["obs_w2"]) * (z1 > 0.0)
    grads["obs_w1"] = dz1.T @ obs
    grads["obs_b1"] = dz1.sum(axis=0)
    return grads


def q_forward(params: Params, obs, act) -> np.ndarray | float:
    """Q(s, a). Returns a float for a single sample and an (N,) array for a batch."""
    single = np.ndim(obs) == 1
    o, a = _as_batch(obs, act)
    q, _ = forward(params, o, a)
    return float(q[0]) if single else q


def q_backward(params: Params, obs, act, upstream_grad) -> Params:
    """Parameter gradients of the network output weighted by ``upstream_grad`` (dLoss/dQ)."""
    o, a = _as_batch(obs, act)
    _, cache = forward(params, o, a)
    return backward(params, cache, np.broadcast_to(np.asarray(upstream_grad, dtype=np.float64), (o.shape[0],)))


def q_all_actions(params: Params, obs: np.ndarray, actions_enc: np.ndarray) -> np.ndarray:
    """Q for every (state, table action) pair; returns shape (N, n_actions).

    The action branch and output layer use elementwise products so identical
    actions always produce bit-identical values (batched matmul may round
    rows differently), which keeps the lowest-index tie rule honest.
    """
    obs = np.atleast_2d(obs)
    h1 = np.maximum(obs @ params["obs_w1"].T + params["obs_b1"], 0.0)
    obs_part = h1 @ params["obs_w2"].T + params["obs_b2"]
    w = params["act_w"]
    act_part = actions_enc[:, 0:1] * w[:, 0] + actions_enc[:, 1:2] * w[:, 1] + params["act_b"]
    h2 = np.maximum(obs_part[:, None, :] + act_part[None, :, :], 0.0)
    return (h2 * params["out_w"][0]).sum(axis=-1) + params["out_b"][0]


def argmax_action(params: Params, obs, actions_enc: np.ndarray) -> int:
    """Greedy action id; ties go to the lowest index."""
    if len(actions_enc) == 0:
        raise InvalidInputError("empty action table")
    return int(np.argmax(q_all_actions(params, np.asarray(obs, dtype=np.float64), actions_enc)[0]))


@dataclass
class OptimizerState:
    """SGD with optional momentum, or Adam.

    ``kind`` is one of ``"sgd"``, ``"momentum"``, ``"adam"``.
    """

    lr: float = 1e-3
    kind: str = "sgd"
    momentum: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    grad_clip: float | None = None
    t: int = 0
    m: Params = field(default_factory=dict)
    s: Params = field(default_factory=dict)

    def __post_init__(self):
        if not self.lr > 0.0:
            raise InvalidInputError("learning rate must be positive")
        if self.kind not in ("sgd", "momentum", "adam"):
            raise InvalidInputError(f"unknown optimizer {self.kind!r}")


def sgd_step(params: Params, grads: Params, opt: OptimizerState) -> Params:
    """Apply one optimizer update in place and return ``params``."""
    if set(grads) != set(params):
        raise InvalidInputError("gradient keys do not match parameters")
    for k, g in grads.items():
        if np.shape(g) != params[k].shape:
            raise InvalidInputError(f"shape mismatch for {k}: {np.shape(g)} vs {params[k].shape}")
    if opt.grad_clip is not None:
        norm = math.sqrt(sum(float(np.sum(g * g)) for g in grads.values()))
        if norm > opt.grad_clip:
            grads = {k: g * (opt.grad_clip / norm) for k, g in grads.items()}
    opt.t += 1
    if opt.kind == "sgd":
        for k, g in grads.items():
            params[k] -= opt.lr * g
    elif opt.kind == "momentum":
        for k, g in grads.items():
            buf = opt.m.get(k)
            buf = g.copy() if buf is None else opt.momentum * buf + g
            opt.m[k] = buf
            params[k] -= opt.lr * buf
    else:
        b1, b2 = opt.momentum, opt.beta2
        c1 = 1.0 - b1 ** opt.t
        c2 = 1.0 - b2 ** opt.t
        for k, g in grads.items():
            m = opt.m.get(k, np.zeros_like(g))
            s = opt.s.get(k, np.zeros_like(g))
            m = b1 * m + (1.0 - b1) * g
            s = b2 * s + (1.0 - b2) * g * g
            opt.m[k], opt.s[k] = m, s
            params[k] -= opt.lr * (m / c1) / (np.sqrt(s / c2) + opt.eps)
    return params


# Checkpoint layout (all integers little-endian):
#   magic b"DOCKQNET" | u32 version | u32 tensor count
#   per tensor: u16 name length | utf-8 name | u8 ndim | u32 dims... | float64 LE data, row-major
CKPT_MAGIC = b"DOCKQNET"
CKPT_VERSION = 1


def save_params(path: str | Path, params: Params) -> None:
    with open(path, "wb") as fh:
        fh.write(CKPT_MAGIC)
        fh.write(struct.pack("<II", CKPT_VERSION, len(LAYOUT)))
        for name, shape in LAYOUT:
            arr = np.ascontiguousarray(params[name], dtype="<f8")
            if arr.shape != shape:
                raise InvalidInputError(f"{name} has shape {arr.shape}, expected {shape}")
            raw = name.encode("utf-8")
            fh.write(struct.pack("<H", len(raw)) + raw)
            fh.write(struct.pack("<B", arr.ndim) + struct.pack(f"<{arr.ndim}I", *arr.shape))
            fh.write(arr.tobytes(order="C"))


def load_params(path: str | Path) -> Params:
    data = Path(path).read_bytes()
    if data[:8] != CKPT_MAGIC:
        raise InvalidInputError(f"{path}: not a Q-network checkpoint")
    version, count = struct.unpack_from("<II", data, 8)
    if version != CKPT_VERSION:
        raise InvalidInputError(f"{path}: unsupported checkpoint version {version}")
    off = 16
    params: Params = {}
    for _ in range(count):
        (nlen,) = struct.unpack_from("<H", data, off)
        off += 2
        name = data[off:off + nlen].decode("utf-8")
        off += nlen
        (ndim,) = struct.unpack_from("<B", data, off)
        off += 1
        shape = struct.unpack_from(f"<{ndim}I", data, off)
        off += 4 * ndim
        size = int(np.prod(shape)) if ndim else 1
        params[name] = np.frombuffer(data, dtype="<f8", count=size, offset=off).reshape(shape).astype(np.float64)
        off += 8 * size
    expected = dict(LAYOUT)
    if set(params) != set(expected) or any(params[k].shape != expected[k] for k in expected):
        raise InvalidInputError(f"{path}: tensor layout does not match the Q-network")
    return params
