"""JSONL trajectory persistence.

One header line per trajectory followed by one line per step:

    {"task": ..., "trial": ..., "provenance": ..., "seed": ...}
    {"t": 0, "state": {"ee": [...6], "gripper": false, "objects": [[...6]...],
     "grasped": null}, "user": [...3], "robot": [...6], "source": "policy",
     "cos": null}

Floats serialize via Python's shortest round-trip repr, so parse -> serialize
is byte-stable. Optional keys "toggle" and "rot" appear only on steps that
carry a gripper toggle or a rotation bypass.
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from .errors import ConfigError
from .types import (Pose, Provenance, RobotAction, Step, StepSource, TaskState,
                    Trajectory, UserAction)


def step_record(t: int, step: Step) -> dict:
    state = step.state
    record = {
        "t": t,
        "state": {
            "ee": list(state.ee_pose.as_array()),
            "gripper": state.gripper_closed,
            "objects": [list(p.as_array()) for p in state.object_poses],
            "grasped": state.grasped_object,
        },
        "user": list(step.user_action.translation),
        "robot": list(step.robot_action.delta),
        "source": step.source.value,
        "cos": step.gate_cosine,
    }
    if step.user_action.gripper_toggle:
        record["toggle"] = True
    if step.user_action.rotation_bypass is not None:
        record["rot"] = list(step.user_action.rotation_bypass)
    return record


def step_from_record(record: dict) -> Step:
    s = record["state"]
    state = TaskState(
        ee_pose=Pose.from_array(s["ee"]),
        gripper_closed=bool(s["gripper"]),
        object_poses=tuple(Pose.from_array(o) for o in s["objects"]),
        grasped_object=s["grasped"],
    )
    user = UserAction(
        np.asarray(record["user"], dtype=np.float64),
        rotation_bypass=(np.asarray(record["rot"], dtype=np.float64)
                         if "rot" in record else None),
        gripper_toggle=bool(record.get("toggle", False)),
    )
    return Step(
        state=state,
        user_action=user,
        robot_action=RobotAction(np.asarray(record["robot"], dtype=np.float64)),
        source=StepSource(record["source"]),
        gate_cosine=record["cos"],
    )


def write_trajectories(path, trajectories: list[Trajectory],
                       seed: int | None = None) -> None:
    with open(path, "w") as f:
        for traj in trajectories:
            header = {
                "task": traj.task_id,
                "trial": traj.trial_index,
                "provenance": traj.provenance.value,
                "seed": seed,
            }
            f.write(json.dumps(header) + "\n")
            for t, step in enumerate(traj.steps):
                f.write(json.dumps(step_record(t, step)) + "\n")


def read_trajectories(path) -> list[Trajectory]:
    trajectories: list[Trajectory] = []
    header: dict | None = None
    steps: list[Step] = []

    def flush():
        nonlocal header, steps
        if header is not None:
            trajectories.append(Trajectory(
                task_id=header["task"],
                trial_index=int(header["trial"]),
                steps=tuple(steps),
                provenance=Provenance(header["provenance"]),
            ))
        header, steps = None, []

    try:
        with open(path) as f:
            for line in f:
                line = line.strip()
                if not line:
                    continue
                record = json.loads(line)
                if "task" in record:
                    flush()
                    header = record
                elif "aborted" in record:
                    continue  # trailer marker on interrupted live trials
                else:
                    steps.append(step_from_record(record))
        flush()
    except (KeyError, TypeError, ValueError, json.JSONDecodeError) as e:
        raise ConfigError(f"{path}: malformed trajectory file: {e}") from e
    return trajectories


def read_trajectory_files(paths) -> list[Trajectory]:
    out: list[Trajectory] = []
    for p in paths:
        out.extend(read_trajectories(p))
    return out


def append_aborted_marker(path) -> None:
    with open(path, "a") as f:
        f.write(json.dumps({"aborted": True}) + "\n")
