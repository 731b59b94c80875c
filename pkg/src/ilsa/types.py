"""Domain vocabulary: poses, actions, task state, trajectories, task specs.

All values are plain float64; angles are Euler (roll/pitch/yaw) wrapped to
(-pi, pi]. Everything here is a value type with pure functions over it.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field, replace

import numpy as np

from .errors import ConfigError
from .geometry import Box, normalize_angles

# Per-axis translation scale (meters per tick) applied to normalized user
# commands; also the default interpolation step for generated trajectories.
MAX_STEP = 0.01
# Default per-axis rotation step (radians per tick) for interpolated legs.
ROT_STEP = 0.05
# Hard cap on the translational norm of any EXECUTED robot action, enforced at
# the execution boundary (environment / command mapping), not on the value
# type itself: loss arithmetic legitimately evaluates out-of-range candidates.
# Per-axis scaling of a diagonal command reaches sqrt(3) * per-axis scale, so
# the cap sits above that for user overrides and tanh-bounded policy outputs.
MAX_DELTA_NORM = 0.022

_IDENT_RE = r"^[a-z][a-z0-9_]*$"


def _vec(x, n: int, name: str) -> np.ndarray:
    a = np.asarray(x, dtype=np.float64).reshape(-1)
    if a.shape != (n,):
        raise ValueError(f"{name} must have {n} components, got shape {a.shape}")
    return a


@dataclass(frozen=True)
class Pose:
    """6-DoF pose: position in meters, orientation as wrapped Euler angles."""

    position: np.ndarray
    orientation: np.ndarray

    def __post_init__(self):
        p = _vec(self.position, 3, "position")
        if not np.all(np.isfinite(p)):
            raise ValueError(f"position must be finite, got {p}")
        o = normalize_angles(_vec(self.orientation, 3, "orientation"))
        object.__setattr__(self, "position", p)
        object.__setattr__(self, "orientation", o)

    def as_array(self) -> np.ndarray:
        return np.concatenate([self.position, self.orientation])

    @classmethod
    def from_array(cls, a) -> Pose:
        a = _vec(a, 6, "pose array")
        return cls(a[:3], a[3:])

    def allclose(self, other: Pose, tol: float = 1e-9) -> bool:
        return bool(
            np.allclose(self.position, other.position, rtol=0.0, atol=tol)
            and np.allclose(self.orientation, other.orientation, rtol=0.0, atol=tol)
        )


def pose_delta(start: Pose, end: Pose) -> np.ndarray:
    """6-vector taking start to end: position difference plus shortest-path
    per-axis angular difference."""
    dpos = end.position - start.position
    drot = normalize_angles(end.orientation - start.orientation)
    return np.concatenate([dpos, drot])


def apply_delta(pose: Pose, delta: np.ndarray) -> Pose:
    delta = _vec(delta, 6, "delta")
    return Pose(pose.position + delta[:3], pose.orientation + delta[3:])


@dataclass(frozen=True)
class UserAction:
    """Normalized 3-axis velocity command, optional direct rotation, gripper event."""

    translation: np.ndarray
    rotation_bypass: np.ndarray | None = None
    gripper_toggle: bool = False

    def __post_init__(self):
        t = _vec(self.translation, 3, "translation")
        if np.any(np.abs(t) > 1.0 + 1e-12):
            raise ValueError(f"translation components must lie in [-1, 1], got {t}")
        object.__setattr__(self, "translation", t)
        if self.rotation_bypass is not None:
            r = _vec(self.rotation_bypass, 3, "rotation_bypass")
            if np.any(t != 0.0):
                raise ValueError("rotation_bypass and translation are mutually exclusive")
            object.__setattr__(self, "rotation_bypass", r)

    @classmethod
    def idle(cls) -> UserAction:
        return cls(np.zeros(3))


@dataclass(frozen=True)
class RobotAction:
    """6-DoF delta: meters on components 0-2, radians on 3-5."""

    delta: np.ndarray

    def __post_init__(self):
        d = _vec(self.delta, 6, "delta")
        if not np.all(np.isfinite(d)):
            raise ValueError(f"action delta must be finite, got {d}")
        object.__setattr__(self, "delta", d)

    @classmethod
    def zero(cls) -> RobotAction:
        return cls(np.zeros(6))

    def assert_step_bounded(self, max_norm: float = MAX_DELTA_NORM) -> RobotAction:
        """Enforce the executed-step translational norm cap; returns self."""
        n = float(np.linalg.norm(self.delta[:3]))
        if n > max_norm:
            raise ValueError(f"translational norm {n:.6f} exceeds cap {max_norm}")
        return self

    @property
    def translation(self) -> np.ndarray:
        return self.delta[:3]

    @property
    def rotation(self) -> np.ndarray:
        return self.delta[3:]


@dataclass(frozen=True)
class TaskState:
    """Full task state: end-effector pose, gripper, and all object poses."""

    ee_pose: Pose
    gripper_closed: bool
    object_poses: tuple[Pose, ...]
    grasped_object: int | None = None

    def __post_init__(self):
        object.__setattr__(self, "object_poses", tuple(self.object_poses))
        if self.grasped_object is not None and not (
            0 <= self.grasped_object < len(self.object_poses)
        ):
            raise ValueError(f"grasped_object {self.grasped_object} out of range")


def transition(state: TaskState, action: RobotAction) -> TaskState:
    """Pure kinematic update: the end effector moves by the delta and a grasped
    object moves rigidly with it; every other object stays put."""
    ee = apply_delta(state.ee_pose, action.delta)
    objects = list(state.object_poses)
    if state.grasped_object is not None:
        objects[state.grasped_object] = apply_delta(
            objects[state.grasped_object], action.delta
        )
    return TaskState(ee, state.gripper_closed, tuple(objects), state.grasped_object)


class StepSource(enum.Enum):
    POLICY = "policy"
    USER_OVERRIDE = "user"
    SYNTHETIC = "synthetic"


class Provenance(enum.Enum):
    KINEMATIC = "kinematic"
    INTERACTION = "interaction"
    CORRECTED = "corrected"


@dataclass(frozen=True)
class Step:
    """One control tick: the state the action executed in, both action channels,
    and where the executed action came from."""

    state: TaskState
    user_action: UserAction
    robot_action: RobotAction
    source: StepSource
    gate_cosine: float | None = None

    def __post_init__(self):
        if self.source is StepSource.SYNTHETIC and self.gate_cosine is not None:
            raise ValueError("synthetic steps never carry a gate cosine")


@dataclass(frozen=True)
class Trajectory:
    task_id: str
    trial_index: int
    steps: tuple[Step, ...]
    provenance: Provenance

    def __post_init__(self):
        object.__setattr__(self, "steps", tuple(self.steps))
        if not self.steps:
            raise ValueError("trajectory must be non-empty")
        if self.trial_index < 0:
            raise ValueError("trial_index must be >= 0")

    def __len__(self) -> int:
        return len(self.steps)


def final_state(traj: Trajectory) -> TaskState:
    last = traj.steps[-1]
    return transition(last.state, last.robot_action)


def ee_positions(traj: Trajectory) -> np.ndarray:
    """(n_steps + 1, 3) end-effector positions, including the post-final state."""
    pts = [s.state.ee_pose.position for s in traj.steps]
    pts.append(final_state(traj).ee_pose.position)
    return np.stack(pts)


def verify_consistency(traj: Trajectory, tol: float = 1e-9) -> None:
    """Check that consecutive states follow from the executed actions under the
    kinematic transition. Gripper flips between ticks are allowed; poses of the
    end effector and every object must replay exactly (within tol).

    Raises AssertionError on the first inconsistent tick.
    """
    for t in range(len(traj.steps) - 1):
        expect = transition(traj.steps[t].state, traj.steps[t].robot_action)
        got = traj.steps[t + 1].state
        assert expect.ee_pose.allclose(got.ee_pose, tol), f"ee pose mismatch at step {t}"
        assert len(expect.object_poses) == len(got.object_poses), f"object count changed at {t}"
        for k, (a, b) in enumerate(zip(expect.object_poses, got.object_poses)):
            assert a.allclose(b, tol), f"object {k} pose mismatch at step {t}"


class SubtaskKind(enum.Enum):
    REACH = "reach"
    GRASP = "grasp"
    TRANSPORT = "transport"
    RELEASE = "release"
    ORIENT = "orient"


@dataclass(frozen=True)
class TargetRule:
    """Function-of-state descriptor for a subtask's target end-effector pose.

    object_index None means a fixed target at `offset`; otherwise the target
    position is that object's position plus `offset`. `orientation` is the
    absolute target orientation, or None to hold the current EE orientation.
    """

    object_index: int | None
    offset: np.ndarray
    orientation: np.ndarray | None = None

    def __post_init__(self):
        object.__setattr__(self, "offset", _vec(self.offset, 3, "offset"))
        if self.orientation is not None:
            object.__setattr__(
                self, "orientation", normalize_angles(_vec(self.orientation, 3, "orientation"))
            )


@dataclass(frozen=True)
class SubtaskSpec:
    kind: SubtaskKind
    target_rule: TargetRule
    completion_tolerance: float

    def __post_init__(self):
        if not self.completion_tolerance > 0:
            raise ConfigError("completion_tolerance must be > 0")


def subtask_target(spec: SubtaskSpec, state: TaskState) -> Pose:
    """Resolve a subtask's target end-effector pose against the current state."""
    rule = spec.target_rule
    if rule.object_index is None:
        position = rule.offset
        base_orientation = state.ee_pose.orientation
    else:
        if rule.object_index >= len(state.object_poses):
            raise ConfigError(
                f"target rule references object {rule.object_index}, "
                f"but state has {len(state.object_poses)} objects"
            )
        obj = state.object_poses[rule.object_index]
        position = obj.position + rule.offset
        base_orientation = state.ee_pose.orientation
    orientation = rule.orientation if rule.orientation is not None else base_orientation
    return Pose(position, orientation)


@dataclass(frozen=True)
class TaskSpec:
    """A manipulation task: objects, subtask chain, workspace, and eval obstacles."""

    name: str
    object_count: int
    subtasks: tuple[SubtaskSpec, ...]
    workspace: Box
    obstacles: tuple[Box, ...]
    sampling_regions: tuple[Box, ...]
    home_pose: Pose

    def __post_init__(self):
        import re

        if not re.match(_IDENT_RE, self.name):
            raise ConfigError(f"task name must be lowercase snake_case, got {self.name!r}")
        object.__setattr__(self, "subtasks", tuple(self.subtasks))
        object.__setattr__(self, "obstacles", tuple(self.obstacles))
        object.__setattr__(self, "sampling_regions", tuple(self.sampling_regions))
        if not self.subtasks:
            raise ConfigError("subtask list must be non-empty")
        if len(self.sampling_regions) != self.object_count:
            raise ConfigError("one sampling region required per object")
        for i, region in enumerate(self.sampling_regions):
            if not self.workspace.contains_box(region):
                raise ConfigError(f"sampling region {i} lies outside the workspace")

    def grasp_windows(self) -> list[tuple[bool, int | None]]:
        """(gripper_closed, grasped_object) signature before each subtask,
        simulated from the subtask chain. Used for phase inference."""
        sig: list[tuple[bool, int | None]] = []
        closed, held = False, None
        for st in self.subtasks:
            sig.append((closed, held))
            if st.kind is SubtaskKind.GRASP:
                closed, held = True, st.target_rule.object_index
            elif st.kind is SubtaskKind.RELEASE:
                closed, held = False, None
        return sig


def task_to_json(task: TaskSpec) -> dict:
    return {
        "name": task.name,
        "object_count": task.object_count,
        "home_pose": list(task.home_pose.as_array()),
        "workspace": task.workspace.to_json(),
        "obstacles": [b.to_json() for b in task.obstacles],
        "sampling_regions": [b.to_json() for b in task.sampling_regions],
        "subtasks": [
            {
                "kind": st.kind.value,
                "completion_tolerance": st.completion_tolerance,
                "target_rule": {
                    "object_index": st.target_rule.object_index,
                    "offset": list(st.target_rule.offset),
                    "orientation": (
                        None
                        if st.target_rule.orientation is None
                        else list(st.target_rule.orientation)
                    ),
                },
            }
            for st in task.subtasks
        ],
    }


def task_from_json(d: dict) -> TaskSpec:
    try:
        subtasks = tuple(
            SubtaskSpec(
                kind=SubtaskKind(st["kind"]),
                completion_tolerance=float(st["completion_tolerance"]),
                target_rule=TargetRule(
                    object_index=st["target_rule"]["object_index"],
                    offset=st["target_rule"]["offset"],
                    orientation=st["target_rule"].get("orientation"),
                ),
            )
            for st in d["subtasks"]
        )
        return TaskSpec(
            name=d["name"],
            object_count=int(d["object_count"]),
            subtasks=subtasks,
            workspace=Box.from_json(d["workspace"]),
            obstacles=tuple(Box.from_json(b) for b in d.get("obstacles", [])),
            sampling_regions=tuple(Box.from_json(b) for b in d["sampling_regions"]),
            home_pose=Pose.from_array(d["home_pose"]),
        )
    except (KeyError, TypeError, ValueError) as e:
        raise ConfigError(f"malformed task document: {e}") from e
