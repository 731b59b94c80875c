"""Structured fine-tuning: corrected-trajectory construction, layered
supervision plans, partial model updates, and the ablation variants.

The update pipeline after each interaction trial:

1. Each maximal run of user-override steps in the interaction log, together
   with the policy-executed run leading into it, is replaced by the straight
   segment between the positions where that policy run began (t0) and where
   the policy resumed (t2). Robot actions come from consecutive pose deltas
   and user commands are re-synthesized toward the segment end, exactly as in
   pretraining generation.
2. Layered supervision: corrected interaction data supervises all four loss
   terms; pretraining data supervises only the intermediate head's demo term,
   anchoring what the model already knows without touching the final output.
3. Partial update: only the transformer partition trains; embedders and both
   heads stay frozen. Variants A, B1-B4, C1, C2 alter exactly one of these
   three choices each.
"""

from __future__ import annotations

import time
from dataclasses import dataclass

import numpy as np

from .errors import TrainingError
from .nn import PARTITIONS, ParamSet
from .policy import (ALL_TERMS, INTERMEDIATE_ONLY, LossMask, PolicyConfig,
                     run_epochs, trajectory_arrays)
from .trajgen import interpolate, synth_user_action
from .types import (MAX_STEP, Pose, Provenance, RobotAction, Step, StepSource,
                    TaskState, Trajectory, UserAction, final_state, pose_delta,
                    transition)

VARIANTS = ("ilsa", "a", "b1", "b2", "b3", "b4", "c1", "c2")


@dataclass(frozen=True)
class OverwriteEpisode:
    """One override event: policy run start t0, override start t1, resume t2,
    with the end-effector positions at those ticks."""

    t0: int
    t1: int
    t2: int
    p_t0: np.ndarray
    p_t1: np.ndarray
    p_t2: np.ndarray

    def __post_init__(self):
        if not (self.t0 <= self.t1 < self.t2):
            raise ValueError(f"episode indices must satisfy t0 <= t1 < t2, "
                             f"got ({self.t0}, {self.t1}, {self.t2})")


@dataclass(frozen=True)
class FinetuneConfig:
    variant: str = "ilsa"
    epochs: int = 10
    lr: float = 1e-4
    batch_size: int = 256
    b3_sample_count: int = 10
    correction_step_norm: float = MAX_STEP
    tie_epsilon: float = 1e-6
    trainable_partitions: frozenset[str] | None = None  # None: derive from variant

    def __post_init__(self):
        if self.variant not in VARIANTS:
            raise ValueError(f"unknown variant {self.variant!r}; one of {VARIANTS}")
        if self.epochs < 1:
            raise ValueError("epochs must be >= 1")
        if self.trainable_partitions is not None and not self.trainable_partitions:
            raise ValueError("trainable_partitions must be non-empty")


@dataclass
class FinetuneReport:
    variant: str
    epochs: int
    per_epoch_losses: list[float]
    changed_parameter_count: int
    changed_partitions: list[str]
    wall_time_s: float

    def to_json(self) -> dict:
        return {
            "variant": self.variant,
            "epochs": self.epochs,
            "per_epoch_losses": self.per_epoch_losses,
            "changed_parameter_count": self.changed_parameter_count,
            "changed_partitions": self.changed_partitions,
            "wall_time_s": self.wall_time_s,
        }


_CORRECTABLE = (Provenance.INTERACTION, Provenance.CORRECTED)


def find_overwrite_episodes(traj: Trajectory) -> list[OverwriteEpisode]:
    """Locate maximal user-override runs [t1, t2) and the start t0 of the
    maximal policy-executed run immediately preceding each (t0 = t1 when the
    override opens the trajectory or directly follows another episode)."""
    if traj.provenance not in _CORRECTABLE:
        raise ValueError("episode detection expects an interaction trajectory")
    sources = [s.source for s in traj.steps]
    positions = [s.state.ee_pose.position for s in traj.steps]
    positions.append(final_state(traj).ee_pose.position)
    episodes = []
    t = 0
    n = len(sources)
    while t < n:
        if sources[t] is not StepSource.USER_OVERRIDE:
            t += 1
            continue
        t1 = t
        while t < n and sources[t] is StepSource.USER_OVERRIDE:
            t += 1
        t2 = t
        t0 = t1
        while t0 > 0 and sources[t0 - 1] is StepSource.POLICY:
            t0 -= 1
        episodes.append(OverwriteEpisode(
            t0, t1, t2, positions[t0], positions[t1], positions[t2]
        ))
    return episodes


def _pose_at(traj: Trajectory, t: int) -> Pose:
    if t < len(traj.steps):
        return traj.steps[t].state.ee_pose
    return final_state(traj).ee_pose


def _gripper_events(traj: Trajectory, t0: int, t2: int) -> list[tuple[np.ndarray, bool, int | None]]:
    """Gripper flips strictly inside [t0, t2): (position, new state, new grasp).
    A flip "at t" changed the state between steps t-1 and t; the flip landing
    exactly on t0 is already part of the window's starting state."""
    events = []
    for t in range(t0 + 1, t2):
        prev, cur = traj.steps[t - 1].state, traj.steps[t].state
        if prev.gripper_closed != cur.gripper_closed:
            events.append((cur.ee_pose.position, cur.gripper_closed,
                           cur.grasped_object))
    return events


def build_corrected_trajectory(traj: Trajectory, step_norm: float,
                               tie_epsilon: float,
                               rng: np.random.Generator) -> Trajectory:
    """Replace every override episode's window [t0, t2) with the straight
    interpolated segment between the positions at t0 and t2.

    Replacement steps are synthetic: robot actions are consecutive pose
    deltas and user commands are re-synthesized toward the segment endpoint.
    Gripper flips that occurred inside a replaced window are re-inserted at
    the nearest corrected step by position. Untouched spans keep their
    actions verbatim while their states are rebuilt by replay, so the output
    is always replay-consistent even when a grasp event moved slightly.
    """
    episodes = find_overwrite_episodes(traj)
    if not episodes:
        return Trajectory(traj.task_id, traj.trial_index, traj.steps,
                          Provenance.CORRECTED)
    window_at = {ep.t0: ep for ep in episodes}
    new_steps: list[Step] = []
    state = traj.steps[0].state
    t = 0
    n = len(traj.steps)
    while t < n:
        ep = window_at.get(t)
        if ep is not None:
            pose_b = _pose_at(traj, ep.t2)
            segment = interpolate(state.ee_pose, pose_b, step_norm)
            events = _gripper_events(traj, ep.t0, ep.t2)
            if len(segment) == 1 and events:
                segment = [segment[0], segment[0]]  # zero-length window, event only
            event_slots: dict[int, list] = {}
            for pos, closed, grasped in events:
                dists = [np.linalg.norm(p.position - pos) for p in segment[:-1]]
                slot = int(np.argmin(dists))
                event_slots.setdefault(slot, []).append((closed, grasped))
            for k in range(len(segment) - 1):
                toggled = False
                for closed, grasped in event_slots.get(k, ()):
                    state = TaskState(state.ee_pose, closed, state.object_poses,
                                      grasped)
                    toggled = True
                action = RobotAction(pose_delta(segment[k], segment[k + 1]))
                user = synth_user_action(segment[k], pose_b, tie_epsilon, rng)
                if toggled:
                    user = UserAction(user.translation, gripper_toggle=True)
                new_steps.append(Step(state, user, action, StepSource.SYNTHETIC))
                state = transition(state, action)
            t = ep.t2
            continue
        orig = traj.steps[t]
        if t > 0 and traj.steps[t - 1].state.gripper_closed != orig.state.gripper_closed:
            state = TaskState(state.ee_pose, orig.state.gripper_closed,
                              state.object_poses, orig.state.grasped_object)
        new_steps.append(Step(state, orig.user_action, orig.robot_action,
                              orig.source, orig.gate_cosine))
        state = transition(state, orig.robot_action)
        t += 1
    if not new_steps:
        new_steps.append(Step(traj.steps[0].state, UserAction.idle(),
                              RobotAction.zero(), StepSource.SYNTHETIC))
    return Trajectory(traj.task_id, traj.trial_index, tuple(new_steps),
                      Provenance.CORRECTED)


def trainable_partitions_for(variant: str) -> frozenset[str]:
    if variant == "c1":
        return frozenset(PARTITIONS)
    if variant == "c2":
        return frozenset(p for p in PARTITIONS if p != "transformer")
    return frozenset({"transformer"})


def dataset_step_count(trajs: list[Trajectory]) -> int:
    return sum(len(t.steps) for t in trajs)


def assemble_finetune_plan(cfg: FinetuneConfig, new_trajs: list[Trajectory],
                           pretrain_trajs: list[Trajectory],
                           rng: np.random.Generator,
                           ) -> list[tuple[list[Trajectory], LossMask]]:
    """Per-variant (dataset, loss mask) pairs.

    ilsa/a/c1/c2: new data supervises everything, pretraining data supervises
    the intermediate demo term only. b1: new data alone. b2: both datasets,
    all terms. b3: as b2 with a random pretraining subset. b4: as b2 with
    size-balancing dataset weights (sizes counted in steps).
    """
    if not new_trajs:
        raise TrainingError("fine-tuning requires at least one new trajectory")
    v = cfg.variant
    if v in ("ilsa", "a", "c1", "c2"):
        return [(new_trajs, ALL_TERMS), (pretrain_trajs, INTERMEDIATE_ONLY)]
    if v == "b1":
        return [(new_trajs, ALL_TERMS)]
    if v == "b2":
        return [(new_trajs, ALL_TERMS), (pretrain_trajs, ALL_TERMS)]
    if v == "b3":
        count = min(cfg.b3_sample_count, len(pretrain_trajs))
        picks = rng.choice(len(pretrain_trajs), size=count, replace=False)
        subset = [pretrain_trajs[i] for i in sorted(picks)]
        return [(new_trajs, ALL_TERMS), (subset, ALL_TERMS)]
    if v == "b4":
        n_new = dataset_step_count(new_trajs)
        n_kin = dataset_step_count(pretrain_trajs)
        total = n_new + n_kin
        w_new = 0.5 * total / n_new
        w_kin = 0.5 * total / n_kin
        return [
            (new_trajs, LossMask(weight=w_new)),
            (pretrain_trajs, LossMask(weight=w_kin)),
        ]
    raise TrainingError(f"variant {v!r} has no supervision plan")


def finetune(params: ParamSet, cfg: FinetuneConfig, policy_cfg: PolicyConfig,
             new_trajs: list[Trajectory], pretrain_trajs: list[Trajectory],
             rng: np.random.Generator) -> tuple[ParamSet, FinetuneReport]:
    """One incremental update. Interaction trajectories are corrected first
    (variant `a` trains on the raw logs instead). Parameters are updated in
    place; on a non-finite loss they roll back to their pre-call values.
    """
    started = time.monotonic()
    if cfg.variant == "a":
        new_data = list(new_trajs)
    else:
        new_data = [
            build_corrected_trajectory(t, cfg.correction_step_norm,
                                       cfg.tie_epsilon, rng)
            if t.provenance is Provenance.INTERACTION else t
            for t in new_trajs
        ]
    plan = assemble_finetune_plan(cfg, new_data, pretrain_trajs, rng)
    trainable = set(cfg.trainable_partitions
                    if cfg.trainable_partitions is not None
                    else trainable_partitions_for(cfg.variant))
    datasets = [(*trajectory_arrays(trajs, policy_cfg), mask)
                for trajs, mask in plan if trajs]
    snapshot = params.copy()
    try:
        losses = run_epochs(
            params, policy_cfg, datasets,
            epochs=cfg.epochs, lr=cfg.lr, batch_size=cfg.batch_size,
            trainable=trainable, rng=rng,
        )
    except TrainingError:
        params.load_values(snapshot)
        raise
    changed = params.changed_names(snapshot)
    report = FinetuneReport(
        variant=cfg.variant,
        epochs=cfg.epochs,
        per_epoch_losses=losses,
        changed_parameter_count=len(changed),
        changed_partitions=sorted({params.entries[n].partition for n in changed}),
        wall_time_s=time.monotonic() - started,
    )
    return params, report
