"""End-to-end acceptance checks, one test per criterion.

Each test records a single PASS/FAIL line (printed in the terminal summary)
before asserting. Criteria 6 to 8 share two full training runs of the default
configuration, which take several minutes each.
"""

import csv
import math
import time
from pathlib import Path

import numpy as np
import pytest

from conftest import ACCEPTANCE_LINES
from dockrl import neural
from dockrl.cli import main
from dockrl.config import Config, load_config
from dockrl.dqn import ReplayBuffer, Transition, double_dqn_target, soft_update, vanilla_dqn_target
from dockrl.env import DEFAULT_PHASES, compute_reward, reward_branch
from dockrl.evalharness import read_results_csv, summarize
from dockrl.sim_core import Pose
from dockrl.vision_sim import CameraModel, MarkerLayout, MarkerObservation, project_markers

from oracles import rasterized_centers
from test_dqn import PRIMARY_TABLE, TAB_ACTIONS, TARGET_TABLE, batch_of, tabular_params

DEFAULT_CONFIG = Path(__file__).resolve().parent.parent / "configs" / "default.cfg"
SEED = 0


def verdict(n, ok, detail):
    ACCEPTANCE_LINES.append(f"criterion {n}: {'PASS' if ok else 'FAIL'} - {detail}")
    assert ok, detail


def test_criterion_1_gradient_fidelity():
    start = time.perf_counter()
    rng = np.random.default_rng(11)
    params = {k: 0.5 * rng.standard_normal(s) for k, s in neural.LAYOUT}
    obs, act = rng.uniform(-1, 1, 12), rng.uniform(-1, 1, 2)
    grads = neural.q_backward(params, obs, act, 1.0)
    keys = [k for k, _ in neural.LAYOUT]
    h = 1e-5
    worst = 0.0
    for _ in range(100):
        key = keys[rng.integers(len(keys))]
        idx = tuple(rng.integers(s) for s in params[key].shape)
        plus, minus = neural.copy_params(params), neural.copy_params(params)
        plus[key][idx] += h
        minus[key][idx] -= h
        num = (neural.q_forward(plus, obs, act) - neural.q_forward(minus, obs, act)) / (2 * h)
        ana = grads[key][idx]
        worst = max(worst, abs(num - ana) / max(abs(num) + abs(ana), 1e-8))
    elapsed = time.perf_counter() - start
    verdict(1, worst < 1e-4 and elapsed < 10.0, f"max rel err {worst:.2e} (< 1e-4), {elapsed:.2f} s (< 10 s)")


def test_criterion_2_double_dqn_oracle():
    primary, target = tabular_params(PRIMARY_TABLE), tabular_params(TARGET_TABLE)
    rows = [(0, 0, 1.0, 1, False), (1, 1, -0.5, 2, False), (2, 0, 2.0, 0, False), (0, 1, 5.0, 2, True)]
    got = double_dqn_target(batch_of(rows), primary, target, 0.9, TAB_ACTIONS)
    # hand-computed: primary picks the argmax at s', target network scores it
    expected = np.array([1.0 + 0.9 * 0.0, -0.5 + 0.9 * 2.0, 2.0 + 0.9 * 1.0, 5.0])
    vanilla = vanilla_dqn_target(batch_of(rows), target, 0.9, TAB_ACTIONS)
    exact = bool(np.array_equal(got, expected))
    differs = bool(np.all(got[:3] != vanilla[:3]))
    verdict(2, exact and differs, f"exact match {exact}, differs from max-based target {differs}")


def test_criterion_3_soft_update():
    primary = neural.init_params(np.random.default_rng(0))
    target = neural.init_params(np.random.default_rng(1))
    copy_ok = all(np.array_equal(soft_update(primary, target, 1.0)[k], primary[k]) for k in primary)
    keep_ok = all(np.array_equal(soft_update(primary, target, 0.0)[k], target[k]) for k in primary)
    tau, worst = 0.01, 0.0
    cur = target
    for n in range(1, 301):
        cur = soft_update(primary, cur, tau)
        for k in primary:
            worst = max(worst, float(np.max(np.abs((cur[k] - primary[k]) - (1 - tau) ** n * (target[k] - primary[k])))))
    verdict(3, copy_ok and keep_ok and worst <= 1e-12,
            f"tau=1 copy {copy_ok}, tau=0 identity {keep_ok}, contraction max err {worst:.1e} (<= 1e-12)")


def test_criterion_4_replay_buffer():
    buf = ReplayBuffer(capacity=100)
    for k in range(250):
        buf.add(Transition(np.zeros(12), 0, float(k), np.zeros(12), False))
    fifo = [t.reward for t in buf.transitions()] == [float(k) for k in range(150, 250)]
    n, p = 100_000, 0.01
    counts = np.bincount(buf.sample_indices(np.random.default_rng(0), n), minlength=100)
    z = np.abs(counts - n * p) / math.sqrt(n * p * (1 - p))
    verdict(4, fifo and z.max() < 3.0, f"FIFO order {fifo}, max |z| over 100 slots {z.max():.2f} (< 3)")


def test_criterion_5_projection_vs_rasterizer():
    cam, layout = CameraModel(), MarkerLayout()
    rng = np.random.default_rng(5)
    worst, n = 0.0, 0
    while n < 100:
        pose = Pose(rng.uniform(-0.3, 0.3), rng.uniform(-0.3, 1.1), math.radians(rng.uniform(-35, 35)))
        obs = project_markers(pose, layout, cam)
        if not (obs.in_view1 and obs.in_view2):
            continue
        n += 1
        for (u, v), ref in zip(((obs.u1, obs.v1), (obs.u2, obs.v2)), rasterized_centers(pose, layout, cam)):
            px = (cam.width_px / 2 * (1 + u), cam.height_px / 2 * (1 + v))
            worst = max(worst, math.hypot(px[0] - ref[0], px[1] - ref[1]))
    verdict(5, worst <= 1.0, f"max center distance {worst:.3f} px over 100 in-view poses (<= 1 px)")


def _train_and_eval(root: Path) -> dict:
    out = root / "train"
    start = time.perf_counter()
    code = main(["train", "--config", str(DEFAULT_CONFIG), "--seed", str(SEED), "--out", str(out)])
    elapsed = time.perf_counter() - start
    ev = root / "eval"
    eval_code = None
    if code == 0:
        eval_code = main(["eval", "--checkpoint", str(out / "phase4.ckpt"), "--config", str(DEFAULT_CONFIG),
                          "--noise", "1", "--seed", str(SEED), "--out", str(ev)])
    return {"train_code": code, "elapsed": elapsed, "train": out, "eval": ev, "eval_code": eval_code}


@pytest.fixture(scope="session")
def first_run(tmp_path_factory):
    return _train_and_eval(tmp_path_factory.mktemp("run1"))


@pytest.fixture(scope="session")
def second_run(tmp_path_factory):
    return _train_and_eval(tmp_path_factory.mktemp("run2"))


def test_default_config_file_matches_defaults():
    assert load_config(DEFAULT_CONFIG) == Config()


def test_criterion_6_curriculum_training(first_run):
    log_path = first_run["train"] / "training_log.csv"
    rows = list(csv.DictReader(open(log_path))) if log_path.exists() else []
    phases = [int(r["phase"]) for r in rows]
    completed = first_run["train_code"] == 0 and sorted(set(phases)) == [1, 2, 3, 4] and phases == sorted(phases)
    window = Config().trainer.window
    threshold = Config().phases[3].threshold
    tail = [float(r["return"]) for r in rows if r["phase"] == "4"][-window:]
    tail_mean = float(np.mean(tail)) if tail else float("nan")
    ok = completed and len(rows) <= 20_000 and first_run["elapsed"] < 1800 and tail_mean > threshold
    verdict(6, ok, f"phases completed {completed}, {len(rows)} episodes (<= 20000), "
                   f"{first_run['elapsed']:.0f} s (< 1800 s), phase-4 trailing return {tail_mean:.2f} (> {threshold})")


def test_criterion_7_grid_evaluation(first_run):
    path = first_run["eval"] / "results.csv"
    if not path.exists():
        verdict(7, False, "no checkpoint to evaluate (training did not complete)")
    results = read_results_csv(path)
    s = summarize(results)
    table = (first_run["eval"] / "summary.txt").read_text()
    has_reference = all(t in table for t in ("3.800", "0.822", "0.896", "3.642", "0.934", "1.182",
                                            "6.200", "1.533", "1.661"))
    ok = (len(results) == 90 and s.x_cm.mae <= 2.0 and s.theta_deg.mae <= 3.0 and s.n_goal == 90
          and first_run["eval_code"] == 0 and has_reference)
    verdict(7, ok, f"MAE |X| {s.x_cm.mae:.3f} cm (<= 2), MAE |theta| {s.theta_deg.mae:.3f} deg (<= 3), "
                   f"{s.n_goal}/{s.n_runs} reached y >= 1 m, reference row {has_reference}")


def test_criterion_8_determinism(first_run, second_run):
    same_log = same_results = False
    if first_run["train_code"] == 0 and second_run["train_code"] == 0:
        same_log = (first_run["train"] / "training_log.csv").read_bytes() == \
            (second_run["train"] / "training_log.csv").read_bytes()
        same_results = (first_run["eval"] / "results.csv").read_bytes() == \
            (second_run["eval"] / "results.csv").read_bytes()
    verdict(8, same_log and same_results,
            f"training_log.csv identical {same_log}, results.csv identical {same_results}")


def _obs(u1, v1, u2, v2):
    return MarkerObservation(u1, v1, u2, v2)


def test_criterion_9_reward_branches():
    anchors = (0.15, -0.10)
    at_goal, short = Pose(0.0, 1.0, 0.0), Pose(0.0, 0.9, 0.0)
    failures = []
    for ph in DEFAULT_PHASES:
        c1, c2, big = ph.c1, ph.c2, 0.3
        cases = [
            # (obs, pose, expected branch, expected reward)
            (_obs(0.5 * c1, 0.2, -0.5 * c1, -0.1), at_goal, "success", ph.R),
            (_obs(1.5 * c1, 0.2, 0.0, -0.1), at_goal, "band", 0.0),
            (_obs(0.0, 0.2, -1.5 * c1, -0.1), at_goal, "band", 0.0),
            (_obs(big, 0.25, -big, -0.05), at_goal, "penalty",
             -(10 * 0.1 + 10 * 0.05 + c2 * big + c2 * big)),
            (_obs(0.5 * c1, 0.15, 0.5 * c1, -0.10), short, "penalty", -(c2 * c1)),
        ]
        for obs, pose, branch, reward in cases:
            got_b = reward_branch(obs, pose, ph)
            got_r = compute_reward(obs, pose, ph, anchors)
            if got_b != branch or not math.isclose(got_r, reward, rel_tol=1e-12, abs_tol=1e-12):
                failures.append((ph.phase_index, branch, got_b, got_r, reward))
    verdict(9, not failures, f"3 branches x 4 phases checked, mismatches: {failures or 'none'}")
