"""Kinematic evaluation environment: obstacle truncation, workspace clamping,
gripper attachment, and sequential subtask completion tracking."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .geometry import angle_difference, segment_box_entry
from .types import (RobotAction, SubtaskKind, SubtaskSpec, TaskSpec, TaskState,
                    subtask_target, transition)

# Closing the gripper attaches the nearest object within this radius; it must
# cover every Grasp subtask tolerance so an in-tolerance toggle always grasps.
ATTACH_RADIUS = 0.025


@dataclass
class Metrics:
    completion_steps: int = 0
    override_count: int = 0
    pause_count: int = 0
    collision_count: int = 0
    success: bool = False

    def to_json(self) -> dict:
        return {
            "completion_steps": self.completion_steps,
            "override_count": self.override_count,
            "pause_count": self.pause_count,
            "collision_count": self.collision_count,
            "success": self.success,
        }


def subtask_complete(st: SubtaskSpec, state: TaskState) -> bool:
    """Completion predicate shared by the environment and the simulated user."""
    if st.kind is SubtaskKind.GRASP:
        return state.gripper_closed and state.grasped_object == st.target_rule.object_index
    if st.kind is SubtaskKind.RELEASE:
        return not state.gripper_closed and state.grasped_object is None
    target = subtask_target(st, state)
    tol = st.completion_tolerance
    if np.linalg.norm(state.ee_pose.position - target.position) > tol:
        return False
    if st.target_rule.orientation is not None:
        diffs = [angle_difference(t, c)
                 for t, c in zip(target.orientation, state.ee_pose.orientation)]
        if max(abs(d) for d in diffs) > tol:
            return False
    return True


class Env:
    """Owns the task state for one trial.

    Obstacles come from the task spec; running an obstacle-free trial means
    passing a spec with an empty obstacle tuple (see tasks.without_obstacles).
    """

    def __init__(self, task: TaskSpec, initial_state: TaskState):
        self.task = task
        self.state = initial_state
        self.subtask_index = 0
        self.collision_count = 0
        self.update_completion()

    @property
    def done(self) -> bool:
        return self.subtask_index >= len(self.task.subtasks)

    @property
    def current_subtask(self) -> SubtaskSpec | None:
        if self.done:
            return None
        return self.task.subtasks[self.subtask_index]

    def update_completion(self) -> None:
        while not self.done and subtask_complete(
            self.task.subtasks[self.subtask_index], self.state
        ):
            self.subtask_index += 1

    def apply_toggle(self) -> None:
        """Flip the gripper; closing attaches the nearest object within reach."""
        if self.state.gripper_closed:
            self.state = TaskState(self.state.ee_pose, False,
                                   self.state.object_poses, None)
            return
        grasped = None
        best = ATTACH_RADIUS
        for k, pose in enumerate(self.state.object_poses):
            d = float(np.linalg.norm(pose.position - self.state.ee_pose.position))
            if d <= best:
                grasped, best = k, d
        self.state = TaskState(self.state.ee_pose, True,
                               self.state.object_poses, grasped)

    def execute(self, delta: np.ndarray) -> tuple[RobotAction, bool]:
        """Apply a 6-DoF delta: translation is truncated at the first obstacle
        surface (counted as one collision) and clamped to the workspace, so
        the executed action always replays exactly."""
        RobotAction(delta).assert_step_bounded()
        p0 = self.state.ee_pose.position
        p1 = p0 + delta[:3]
        collided = False
        t_hit = None
        for box in self.task.obstacles:
            t = segment_box_entry(p0, p1, box)
            if t is not None and (t_hit is None or t < t_hit):
                t_hit = t
        if t_hit is not None:
            p1 = p0 + t_hit * (p1 - p0)
            collided = True
            self.collision_count += 1
        p1 = self.task.workspace.clamp(p1)
        executed = RobotAction(np.concatenate([p1 - p0, delta[3:]]))
        self.state = transition(self.state, executed)
        return executed, collided
