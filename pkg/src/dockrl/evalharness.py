"""90-run evaluation grid, final-offset metrics and report files."""

from __future__ import annotations

import csv
import itertools
import math
from dataclasses import asdict, dataclass, fields
from pathlib import Path
from typing import Sequence

import numpy as np

from . import neural
from .dqn import StateEncoder
from .env import DockingEnv
from .neural import Params
from .sim_core import InvalidInputError, Pose


@dataclass(frozen=True)
class EvalGrid:
    x_values: tuple[float, ...] = (-0.2, 0.0, 0.2)
    y_values: tuple[float, ...] = (-0.2, 0.0, 0.2)
    theta_deg_values: tuple[float, ...] = (-30.0, -15.0, 0.0, 15.0, 30.0)
    repeats: int = 2

    def runs(self) -> list[tuple[float, float, float, int]]:
        """(x, y, theta_deg, repeat) in row order: x, then y, then theta, then repeat."""
        return [(x, y, th, r) for x, y, th in itertools.product(self.x_values, self.y_values, self.theta_deg_values)
                for r in range(self.repeats)]

    def __len__(self) -> int:
        return len(self.x_values) * len(self.y_values) * len(self.theta_deg_values) * self.repeats


@dataclass
class EvalResult:
    run: int
    x0: float          # m
    y0: float          # m
    theta0_deg: float
    repeat: int
    x_cm: float        # final lateral offset
    y_cm: float        # overshoot past the stop line
    theta_deg: float   # final heading offset
    steps: int
    outcome: str       # "goal", "timeout" or "lost"

    @property
    def terminated_normally(self) -> bool:
        return self.outcome == "goal"


RESULT_FIELDS = [f.name for f in fields(EvalResult)]


@dataclass(frozen=True)
class DimensionStats:
    max_abs: float
    mae: float
    rmse: float


@dataclass(frozen=True)
class MetricsSummary:
    x_cm: DimensionStats
    y_cm: DimensionStats
    theta_deg: DimensionStats
    n_runs: int
    n_goal: int


# Hardware numbers from the original experiments, printed for comparison only.
REFERENCE_TABLE = MetricsSummary(
    x_cm=DimensionStats(3.800, 0.822, 0.896),
    y_cm=DimensionStats(3.642, 0.934, 1.182),
    theta_deg=DimensionStats(6.200, 1.533, 1.661),
    n_runs=90, n_goal=90,
)


def run_episode_greedy(env: DockingEnv, params: Params, pose: Pose, rng: np.random.Generator,
                       encoder: StateEncoder, trajectory: list | None = None) -> tuple[Pose, int, str]:
    """Drive one episode with the greedy policy from ``pose``."""
    actions_enc = env.encoded_actions()
    state = env.reset_to(pose, rng)
    if trajectory is not None:
        trajectory.append((0, pose.x, pose.y, pose.theta, -1))
    while True:
        a = neural.argmax_action(params, encoder(state), actions_enc)
        state, _, done, info = env.step_info(a)
        if trajectory is not None:
            trajectory.append((env.t, env.pose.x, env.pose.y, env.pose.theta, a))
        if done:
            return env.pose, env.t, info.outcome


def run_grid(params: Params, env: DockingEnv, grid: EvalGrid = EvalGrid(), seed: int = 0,
             obs_scale: float = 1.0, trajectories: dict | None = None) -> list[EvalResult]:
    """Greedy rollouts from every grid start; run ``i`` draws detector noise from stream (seed, i)."""
    encoder = StateEncoder.for_env(env, obs_scale)
    results = []
    for i, (x0, y0, th0, rep) in enumerate(grid.runs()):
        rng = np.random.default_rng([seed, i])
        traj: list | None = [] if trajectories is not None else None
        final, steps, outcome = run_episode_greedy(env, params, Pose(x0, y0, math.radians(th0)), rng, encoder, traj)
        if trajectories is not None:
            trajectories[i] = traj
        results.append(EvalResult(
            run=i, x0=x0, y0=y0, theta0_deg=th0, repeat=rep,
            x_cm=100.0 * final.x, y_cm=100.0 * (final.y - env.sim.y_goal),
            theta_deg=math.degrees(final.theta), steps=steps, outcome=outcome,
        ))
    return results


def _stats(values: Sequence[float]) -> DimensionStats:
    a = np.abs(np.asarray(values, dtype=np.float64))
    return DimensionStats(float(a.max()), float(a.mean()), float(np.sqrt(np.mean(a * a))))


def summarize(results: Sequence[EvalResult]) -> MetricsSummary:
    """Max absolute error, MAE and RMSE of the final offsets, per dimension."""
    if not results:
        raise InvalidInputError("no results to summarize")
    return MetricsSummary(
        x_cm=_stats([r.x_cm for r in results]),
        y_cm=_stats([r.y_cm for r in results]),
        theta_deg=_stats([r.theta_deg for r in results]),
        n_runs=len(results),
        n_goal=sum(r.terminated_normally for r in results),
    )


def format_table(summary: MetricsSummary, reference: MetricsSummary | None = REFERENCE_TABLE) -> str:
    head = f"{'Error Measure':<18}{'X Offset (cm)':>15}{'Y Offset (cm)':>15}{'Theta Offset (deg)':>20}"
    lines = [head, "-" * len(head)]

    def rows(s: MetricsSummary, tag: str):
        for label, attr in (("Max Abs. Error", "max_abs"), ("Mean Abs. Error", "mae"), ("RMSE", "rmse")):
            lines.append(f"{(label + tag):<18}{getattr(s.x_cm, attr):>15.3f}{getattr(s.y_cm, attr):>15.3f}"
                         f"{getattr(s.theta_deg, attr):>20.3f}")

    rows(summary, "")
    if reference is not None:
        lines.append("")
        lines.append("hardware reference (not an acceptance target):")
        rows(reference, " *")
    lines.append("")
    lines.append(f"runs: {summary.n_runs}, reached stop line: {summary.n_goal}")
    return "\n".join(lines) + "\n"


def write_results_csv(path: str | Path, results: Sequence[EvalResult]) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(RESULT_FIELDS)
        for r in results:
            w.writerow([repr(float(v)) if isinstance(v, float) else v for v in asdict(r).values()])


def read_results_csv(path: str | Path) -> list[EvalResult]:
    casts = {f.name: f.type for f in fields(EvalResult)}
    out = []
    with open(path, newline="") as fh:
        for row in csv.DictReader(fh):
            kw = {}
            for k, v in row.items():
                t = casts[k]
                kw[k] = int(v) if t in (int, "int") else float(v) if t in (float, "float") else v
            out.append(EvalResult(**kw))
    return out


def report(summary: MetricsSummary, results: Sequence[EvalResult], out_dir: str | Path,
           trajectories: dict | None = None, note: str | None = None) -> list[Path]:
    """Write results.csv, summary.txt and (when given) trajectories.csv into ``out_dir``."""
    out = Path(out_dir)
    try:
        out.mkdir(parents=True, exist_ok=True)
        paths = [out / "results.csv", out / "summary.txt"]
        write_results_csv(paths[0], results)
        text = format_table(summary)
        if note:
            text += note.rstrip("\n") + "\n"
        paths[1].write_text(text)
        if trajectories is not None:
            paths.append(out / "trajectories.csv")
            with open(paths[-1], "w", newline="") as fh:
                w = csv.writer(fh)
                w.writerow(["run", "t", "x", "y", "theta", "action"])
                for run in sorted(trajectories):
                    for t, x, y, th, a in trajectories[run]:
                        w.writerow([run, t, repr(float(x)), repr(float(y)), repr(float(th)), a])
    except OSError as exc:
        raise OSError(f"failed writing report to {out}: {exc}") from exc
    return paths


def mirror_pairs(results: Sequence[EvalResult]) -> list[tuple[EvalResult, EvalResult]]:
    """Pairs of runs whose starts mirror each other, (x, theta) -> (-x, -theta), with x > 0."""
    index = {(r.x0, r.y0, r.theta0_deg, r.repeat): r for r in results}
    pairs = []
    for r in results:
        if r.x0 > 0 or (r.x0 == 0 and r.theta0_deg > 0):
            m = index.get((-r.x0 if r.x0 else 0.0, r.y0, -r.theta0_deg if r.theta0_deg else 0.0, r.repeat))
            if m is not None:
                pairs.append((r, m))
    return pairs
