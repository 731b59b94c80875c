"""Deterministic simulated user and the seeded experiment/ablation harness.

The oracle stands in for a study participant: it reads the current task state,
infers which subtask is in progress, and issues a normalized translation
command toward the subtask target, routing around obstacle boxes inflated by a
clearance margin (axis-aligned visibility routing over box corners plus
face-escape points, shortest path). It emits a gripper toggle exactly when
inside a grasp/release tolerance, and leaves orientation to the policy.

The oracle is a pure function of (state, task, config): it keeps no memory, so
it naturally repeats its command through gate pauses until the robot yields.
"""

from __future__ import annotations

import heapq
from dataclasses import dataclass, field, replace

import numpy as np

from .arbitration import GateConfig, TrialLog, run_trial
from .env import Env, Metrics, subtask_complete
from .errors import ConfigError
from .geometry import Box, nearest_exterior_point, segment_box_entry
from .incremental import FinetuneConfig, finetune
from .nn import ParamSet
from .policy import PolicyConfig, forward
from .trajgen import sample_layout
from .types import (MAX_STEP, SubtaskKind, TaskSpec, TaskState, Trajectory,
                    UserAction, subtask_target)


@dataclass(frozen=True)
class OracleConfig:
    clearance: float = 0.03      # obstacle standoff for routed waypoints, meters
    magnitude: float = 1.0       # commanded speed fraction in (0, 1]
    persistence: bool = True     # informational: a paused robot leaves state
    # unchanged, so the stateless oracle re-issues the same command anyway

    def __post_init__(self):
        if not self.clearance > 0:
            raise ConfigError("clearance must be > 0")
        if not 0 < self.magnitude <= 1:
            raise ConfigError("magnitude must lie in (0, 1]")


def _leg_clear(a: np.ndarray, b: np.ndarray, inflated: list[Box]) -> bool:
    """Segment test against inflated boxes, ignoring boxes that already
    contain an endpoint (escape/terminal approach legs)."""
    for box in inflated:
        if box.contains(a) or box.contains(b):
            continue
        if segment_box_entry(a, b, box) is not None:
            return False
    return True


def plan_route(p: np.ndarray, target: np.ndarray, obstacles: tuple[Box, ...],
               clearance: float) -> list[np.ndarray]:
    """Waypoints from p to target (target last) avoiding obstacles inflated by
    `clearance`. Candidate nodes sit on a slightly larger margin so planned
    legs never graze the inflated surfaces."""
    inflated = [b.inflate(clearance) for b in obstacles]
    containing = [b for b in inflated if b.contains(p, strict=True)]
    if not containing and _leg_clear(p, target, inflated):
        return [target]
    margin = [b.inflate(clearance * 1.05) for b in obstacles]
    nodes: list[np.ndarray] = [p, target]
    for mb in margin:
        nodes.extend(mb.corners())
        lo, hi = np.asarray(mb.lo), np.asarray(mb.hi)
        for q in (p, target):
            for axis in range(3):
                for val in (lo[axis], hi[axis]):
                    esc = q.copy()
                    esc[axis] = val
                    nodes.append(esc)
    usable = [0, 1] + [
        i for i in range(2, len(nodes))
        if not any(b.contains(nodes[i], strict=True) for b in inflated)
    ]
    # when p starts inside an inflated region (the policy pressed the arm
    # against the obstacle), its first hop may only be a local escape
    escape_ok = None
    if containing:
        box = containing[0]
        escape_ok = {
            tuple(nearest_exterior_point(p, mb))
            for mb, b in zip(margin, inflated) if b is box
        }
        for mb, b in zip(margin, inflated):
            if b is box:
                nodes.append(nearest_exterior_point(p, mb))
                usable.append(len(nodes) - 1)

    dist = {0: 0.0}
    prev: dict[int, int] = {}
    heap = [(0.0, 0)]
    visited: set[int] = set()
    while heap:
        d, i = heapq.heappop(heap)
        if i in visited:
            continue
        visited.add(i)
        if i == 1:
            break
        for j in usable:
            if j in visited or j == i:
                continue
            if i == 0 and escape_ok is not None and tuple(nodes[j]) not in escape_ok:
                continue
            if not _leg_clear(nodes[i], nodes[j], inflated):
                continue
            nd = d + float(np.linalg.norm(nodes[j] - nodes[i]))
            if nd < dist.get(j, np.inf):
                dist[j] = nd
                prev[j] = i
                heapq.heappush(heap, (nd, j))
    if 1 not in visited:
        raise ConfigError("no collision-free route to the subtask target")
    path = [1]
    while path[-1] != 0:
        path.append(prev[path[-1]])
    return [nodes[i] for i in reversed(path[:-1])]


def infer_phase(state: TaskState, task: TaskSpec) -> int | None:
    """Index of the subtask in progress, derived from state alone: the first
    subtask whose pre-execution gripper signature matches the current state
    and whose completion predicate fails. None when everything matches as
    complete (terminal states)."""
    current = (state.gripper_closed, state.grasped_object)
    for i, sig in enumerate(task.grasp_windows()):
        if sig == current and not subtask_complete(task.subtasks[i], state):
            return i
    return None


def oracle_action(state: TaskState, task: TaskSpec, cfg: OracleConfig) -> UserAction:
    idx = infer_phase(state, task)
    if idx is None:
        if state.gripper_closed and state.grasped_object is None:
            return UserAction(np.zeros(3), gripper_toggle=True)  # recover
        return UserAction.idle()
    st = task.subtasks[idx]
    target = subtask_target(st, state)
    offset = target.position - state.ee_pose.position
    if float(np.linalg.norm(offset)) <= st.completion_tolerance:
        if st.kind in (SubtaskKind.GRASP, SubtaskKind.RELEASE):
            return UserAction(np.zeros(3), gripper_toggle=True)
        return UserAction.idle()  # in position; orientation is the policy's job
    waypoint = plan_route(state.ee_pose.position, target.position,
                          task.obstacles, cfg.clearance)[0]
    leg = waypoint - state.ee_pose.position
    leg_len = float(np.linalg.norm(leg))
    if leg_len < 1e-12:
        return UserAction.idle()
    # keep the executed override step from overshooting the waypoint
    speed = min(cfg.magnitude, leg_len / MAX_STEP)
    translation = np.clip(speed * leg / leg_len, -1.0, 1.0)
    return UserAction(translation)


def make_oracle(task: TaskSpec, cfg: OracleConfig):
    return lambda state: oracle_action(state, task, cfg)


def make_policy_fn(params: ParamSet, cfg: PolicyConfig):
    return lambda state, user: forward(params, cfg, state, user).final


def layout_for(task: TaskSpec, seed: int, trial: int) -> TaskState:
    """Canonical seeded layout shared by the CLI, experiments, and the live
    service so online and offline runs see identical scenes."""
    seq = np.random.SeedSequence(entropy=seed, spawn_key=(trial,))
    return sample_layout(task, np.random.Generator(np.random.PCG64(seq)))


@dataclass
class ExperimentResult:
    variant: str
    seed: int
    metrics: list[Metrics]
    trajectories: list[Trajectory]
    layouts: list[np.ndarray] = field(default_factory=list)
    params: ParamSet | None = None

    def completion_steps(self) -> list[int]:
        return [m.completion_steps for m in self.metrics]


def run_experiment(task: TaskSpec, pretrained: ParamSet, policy_cfg: PolicyConfig,
                   variant: str, seed: int, pretrain_trajs: list[Trajectory], *,
                   n_trials: int = 4, step_budget: int = 2000,
                   gate_cfg: GateConfig | None = None,
                   oracle_cfg: OracleConfig | None = None,
                   ft_cfg: FinetuneConfig | None = None) -> ExperimentResult:
    """One complete interaction protocol: n_trials oracle-driven trials with a
    fine-tune between trials ("static" skips the updates). Layouts depend only
    on (task, seed, trial), so every variant sees the same scenes. Fine-tuning
    always consumes all interaction trajectories collected so far."""
    gate_cfg = gate_cfg or GateConfig()
    oracle_cfg = oracle_cfg or OracleConfig()
    params = pretrained.copy()
    oracle = make_oracle(task, oracle_cfg)
    policy_fn = make_policy_fn(params, policy_cfg)
    result = ExperimentResult(variant=variant, seed=seed, metrics=[],
                              trajectories=[], params=params)
    collected: list[Trajectory] = []
    for k in range(n_trials):
        state0 = layout_for(task, seed, k)
        result.layouts.append(
            np.stack([p.position for p in state0.object_poses])
        )
        env = Env(task, state0)
        log = run_trial(env, policy_fn, gate_cfg, oracle,
                        step_budget=step_budget, trial_index=k)
        result.metrics.append(log.metrics)
        result.trajectories.append(log.trajectory)
        if variant != "static":
            collected.append(log.trajectory)
            cfg = ft_cfg if ft_cfg is not None else FinetuneConfig(variant=variant)
            if cfg.variant != variant:
                cfg = replace(cfg, variant=variant)
            rng = np.random.Generator(np.random.PCG64(
                np.random.SeedSequence(entropy=seed, spawn_key=(1000 + k,))
            ))
            finetune(params, cfg, policy_cfg, list(collected), pretrain_trajs, rng)
    return result


@dataclass
class AblationTable:
    variants: list[str]
    n_experiments: int
    n_trials: int
    mean_steps: dict[str, list[float]]
    std_steps: dict[str, list[float]]
    raw_steps: dict[str, list[list[int]]]
    ilsa_best_or_tied_at_final_trial: bool | None

    def to_json(self) -> dict:
        return {
            "variants": self.variants,
            "n_experiments": self.n_experiments,
            "n_trials": self.n_trials,
            "mean_completion_steps": self.mean_steps,
            "std_completion_steps": self.std_steps,
            "raw_completion_steps": self.raw_steps,
            "ilsa_best_or_tied_at_final_trial": self.ilsa_best_or_tied_at_final_trial,
        }

    def to_csv(self) -> str:
        lines = ["variant,trial,mean,std,n"]
        for v in self.variants:
            for t in range(self.n_trials):
                lines.append(
                    f"{v},{t + 1},{self.mean_steps[v][t]:.3f},"
                    f"{self.std_steps[v][t]:.3f},{self.n_experiments}"
                )
        return "\n".join(lines) + "\n"


def run_ablation(task: TaskSpec, pretrained: ParamSet, policy_cfg: PolicyConfig,
                 variants: list[str], n_experiments: int, seed: int,
                 pretrain_trajs: list[Trajectory], *, n_trials: int = 4,
                 step_budget: int = 2000,
                 ft_overrides: dict[str, FinetuneConfig] | None = None,
                 ) -> AblationTable:
    """Run every variant over the same per-experiment layout sequences and
    tabulate per-trial completion steps. The expectation that the full method
    is best-or-tied at the final trial is recorded, not enforced."""
    exp_seeds = [int(s) for s in
                 np.random.SeedSequence(seed).generate_state(n_experiments)]
    raw: dict[str, list[list[int]]] = {v: [] for v in variants}
    for exp_seed in exp_seeds:
        reference_layouts = None
        for v in variants:
            ft_cfg = (ft_overrides or {}).get(v)
            res = run_experiment(
                task, pretrained, policy_cfg, v, exp_seed, pretrain_trajs,
                n_trials=n_trials, step_budget=step_budget, ft_cfg=ft_cfg,
            )
            if reference_layouts is None:
                reference_layouts = res.layouts
            else:
                for a, b in zip(reference_layouts, res.layouts):
                    if not np.array_equal(a, b):
                        raise RuntimeError("layout sequences diverged across variants")
            raw[v].append(res.completion_steps())
    mean = {v: list(np.mean(raw[v], axis=0)) for v in variants}
    std = {v: list(np.std(raw[v], axis=0)) for v in variants}
    flag = None
    if "ilsa" in variants:
        final = {v: mean[v][n_trials - 1] for v in variants}
        flag = all(final["ilsa"] <= final[v] + 1e-9 for v in variants)
    return AblationTable(
        variants=list(variants),
        n_experiments=n_experiments,
        n_trials=n_trials,
        mean_steps=mean,
        std_steps=std,
        raw_steps=raw,
        ilsa_best_or_tied_at_final_trial=flag,
    )
