"""Rule-based generation of simulated kinematic pretraining trajectories.

Each trajectory chains the task's subtasks: object layouts are sampled
uniformly inside their regions, the end effector moves along straight
interpolated legs to each subtask target, and a synthetic user command is
drawn per step whose per-axis sign matches the remaining motion toward the
leg's target. Obstacles are deliberately ignored here; pretraining data is
obstacle-blind by design and obstacles exist only in evaluation environments.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import ConfigError
from .types import (MAX_STEP, ROT_STEP, Pose, Provenance, RobotAction, Step,
                    StepSource, SubtaskKind, TaskSpec, TaskState, Trajectory,
                    UserAction, apply_delta, normalize_angles, pose_delta,
                    subtask_target, transition)

_MAX_LAYOUT_ATTEMPTS = 100


@dataclass(frozen=True)
class GenConfig:
    trajectories_per_task: int = 50
    step_norm: float = MAX_STEP            # per-step translational displacement, meters
    rot_step: float = ROT_STEP             # per-step rotation bound, radians per axis
    rng_seed: int = 0
    tie_epsilon: float = 1e-6

    def __post_init__(self):
        if self.trajectories_per_task < 1:
            raise ConfigError("trajectories_per_task must be >= 1")
        if self.step_norm <= 0:
            raise ConfigError("step_norm must be > 0")


def trajectory_rng(rng_seed: int, trajectory_index: int) -> np.random.Generator:
    """Independently seeded stream per trajectory; a pure function of
    (rng_seed, trajectory_index) so datasets are bit-reproducible."""
    seq = np.random.SeedSequence(entropy=rng_seed, spawn_key=(trajectory_index,))
    return np.random.Generator(np.random.PCG64(seq))


def sample_layout(task: TaskSpec, rng: np.random.Generator) -> TaskState:
    """Uniformly place each object inside its sampling region; the end effector
    starts at the task's home pose with the gripper open."""
    objects = tuple(
        Pose(region.sample(rng), np.zeros(3)) for region in task.sampling_regions
    )
    return TaskState(
        ee_pose=task.home_pose,
        gripper_closed=False,
        object_poses=objects,
        grasped_object=None,
    )


def interpolate(start: Pose, end: Pose, step_norm: float,
                rot_step: float = ROT_STEP) -> list[Pose]:
    """Evenly spaced poses along the straight segment from start to end.

    The step count is ceil(distance / step_norm), raised if needed so no
    per-axis rotation step exceeds rot_step (orientations interpolate along
    the shortest angular difference). First pose is start; last is exactly end.
    """
    if step_norm <= 0:
        raise ConfigError("step_norm must be > 0")
    dpos = end.position - start.position
    drot = normalize_angles(end.orientation - start.orientation)
    dist = float(np.linalg.norm(dpos))
    n = max(
        math.ceil(dist / step_norm - 1e-9),
        math.ceil(float(np.max(np.abs(drot))) / rot_step - 1e-9),
    )
    if n == 0:
        if dist == 0.0 and not np.any(drot):
            return [start]
        n = 1
    poses = []
    for k in range(n + 1):
        if k == n:
            poses.append(Pose(end.position.copy(), end.orientation.copy()))
        else:
            t = k / n
            poses.append(Pose(start.position + t * dpos, start.orientation + t * drot))
    return poses


def synth_user_action(current: Pose, target: Pose, tie_epsilon: float,
                      rng: np.random.Generator) -> UserAction:
    """Synthetic normalized user command: on each axis, sample from [0, 1)
    when the target lies above the current position, from (-1, 0] when below,
    and emit exactly 0 on axes within tie_epsilon of the target."""
    draw = rng.random(3)
    diff = target.position - current.position
    translation = np.where(diff > tie_epsilon, draw,
                           np.where(diff < -tie_epsilon, -draw, 0.0))
    return UserAction(translation)


def _toggle_state(state: TaskState, kind: SubtaskKind,
                  object_index: int | None) -> TaskState:
    if kind is SubtaskKind.GRASP:
        return TaskState(state.ee_pose, True, state.object_poses, object_index)
    return TaskState(state.ee_pose, False, state.object_poses, None)


def _plan_targets_in_workspace(task: TaskSpec, layout: TaskState) -> bool:
    """Simulate the subtask chain on a candidate layout and check every
    resolved target stays inside the workspace."""
    state = layout
    for st in task.subtasks:
        target = subtask_target(st, state)
        if not task.workspace.contains(target.position):
            return False
        state = TaskState(target, state.gripper_closed, state.object_poses,
                          state.grasped_object)
        if st.kind in (SubtaskKind.GRASP, SubtaskKind.RELEASE):
            state = _toggle_state(state, st.kind, st.target_rule.object_index)
    return True


def generate_trajectory(task: TaskSpec, cfg: GenConfig, index: int) -> Trajectory:
    rng = trajectory_rng(cfg.rng_seed, index)
    layout = None
    for _ in range(_MAX_LAYOUT_ATTEMPTS):
        candidate = sample_layout(task, rng)
        if _plan_targets_in_workspace(task, candidate):
            layout = candidate
            break
    if layout is None:
        raise ConfigError(
            f"task {task.name!r}: no layout with in-workspace targets after "
            f"{_MAX_LAYOUT_ATTEMPTS} attempts"
        )

    state = layout
    steps: list[Step] = []
    for st in task.subtasks:
        target = subtask_target(st, state)
        poses = interpolate(state.ee_pose, target, cfg.step_norm, cfg.rot_step)
        for k in range(len(poses) - 1):
            action = RobotAction(pose_delta(poses[k], poses[k + 1]))
            action.assert_step_bounded(cfg.step_norm + 1e-12)
            user = synth_user_action(poses[k], target, cfg.tie_epsilon, rng)
            steps.append(Step(state, user, action, StepSource.SYNTHETIC))
            state = transition(state, action)
        if st.kind in (SubtaskKind.GRASP, SubtaskKind.RELEASE):
            state = _toggle_state(state, st.kind, st.target_rule.object_index)
            steps.append(Step(
                state,
                UserAction(np.zeros(3), gripper_toggle=True),
                RobotAction.zero(),
                StepSource.SYNTHETIC,
            ))
    if not steps:
        steps.append(Step(state, UserAction.idle(), RobotAction.zero(),
                          StepSource.SYNTHETIC))
    return Trajectory(task.name, index, tuple(steps), Provenance.KINEMATIC)


def generate_task_trajectories(task: TaskSpec, cfg: GenConfig) -> list[Trajectory]:
    return [generate_trajectory(task, cfg, i)
            for i in range(cfg.trajectories_per_task)]
