"""Built-in desk-scale task specifications.

Both tasks are obstacle-free at pretraining time: the obstacle boxes listed
here are mounted only by evaluation environments, so the pretrained policy
meets them as genuinely unforeseen constraints.

cereal_pour: grasp a cereal container on one side of the table, carry it to a
hover point above a bowl on the other side, and tip it to pour. A wall box
sits across the straight carry corridor.

pill_bottle: grasp a pill bottle and drop it into an open drawer; the drawer's
front lip is a no-go region between the bottle zone and the drawer interior.
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from .errors import ConfigError
from .geometry import Box
from .types import (Pose, SubtaskKind, SubtaskSpec, TargetRule, TaskSpec,
                    task_from_json)

_WORKSPACE = Box((0.20, -0.30, 0.00), (0.70, 0.30, 0.50))
_HOME = Pose(np.array([0.45, 0.0, 0.30]), np.zeros(3))
_POUR_ROLL = (1.6, 0.0, 0.0)


def _rule(obj: int | None, offset, orientation=None) -> TargetRule:
    return TargetRule(obj, np.asarray(offset, dtype=float),
                      None if orientation is None else np.asarray(orientation, dtype=float))


def cereal_pour() -> TaskSpec:
    return TaskSpec(
        name="cereal_pour",
        object_count=2,  # 0: container, 1: bowl
        home_pose=_HOME,
        workspace=_WORKSPACE,
        obstacles=(
            # wall between the pick zone (y < 0) and the pour zone (y > 0)
            Box((0.26, -0.03, 0.00), (0.46, 0.03, 0.22)),
        ),
        sampling_regions=(
            Box((0.30, -0.25, 0.03), (0.42, -0.12, 0.03)),
            Box((0.30, 0.12, 0.03), (0.42, 0.25, 0.03)),
        ),
        subtasks=(
            # translation subtasks hold the current orientation (rule
            # orientation None): completion is positional, so a perturbed
            # wrist can never deadlock a reach or carry
            SubtaskSpec(SubtaskKind.REACH, _rule(0, (0, 0, 0)), 0.025),
            SubtaskSpec(SubtaskKind.GRASP, _rule(0, (0, 0, 0)), 0.025),
            SubtaskSpec(SubtaskKind.TRANSPORT, _rule(1, (0, 0, 0.12)), 0.025),
            SubtaskSpec(SubtaskKind.ORIENT, _rule(1, (0, 0, 0.12), _POUR_ROLL), 0.05),
        ),
    )


def pill_bottle() -> TaskSpec:
    return TaskSpec(
        name="pill_bottle",
        object_count=2,  # 0: drawer anchor (fixed), 1: pill bottle
        home_pose=_HOME,
        workspace=_WORKSPACE,
        obstacles=(
            # drawer front lip between the bottle zone and the drawer interior
            Box((0.46, -0.12, 0.00), (0.48, 0.12, 0.25)),
        ),
        sampling_regions=(
            Box((0.55, 0.0, 0.12), (0.55, 0.0, 0.12)),  # drawer anchor, fixed
            Box((0.28, -0.20, 0.03), (0.40, 0.20, 0.03)),
        ),
        subtasks=(
            SubtaskSpec(SubtaskKind.REACH, _rule(1, (0, 0, 0)), 0.025),
            SubtaskSpec(SubtaskKind.GRASP, _rule(1, (0, 0, 0)), 0.025),
            SubtaskSpec(SubtaskKind.TRANSPORT, _rule(0, (0, 0, 0.10)), 0.025),
            SubtaskSpec(SubtaskKind.RELEASE, _rule(0, (0, 0, 0.10)), 0.025),
        ),
    )


def builtin_tasks() -> dict[str, TaskSpec]:
    return {"cereal_pour": cereal_pour(), "pill_bottle": pill_bottle()}


def load_task(name_or_path: str) -> TaskSpec:
    """Resolve a built-in task name or load a task JSON document."""
    tasks = builtin_tasks()
    if name_or_path in tasks:
        return tasks[name_or_path]
    path = Path(name_or_path)
    if path.exists():
        with open(path) as f:
            return task_from_json(json.load(f))
    raise ConfigError(
        f"unknown task {name_or_path!r}; built-ins: {sorted(tasks)}"
    )


def without_obstacles(task: TaskSpec) -> TaskSpec:
    from dataclasses import replace

    return replace(task, obstacles=())
