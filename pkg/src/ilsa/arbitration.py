"""Runtime shared-control loop: cosine gating, pause alerts, user overrides.

The gate compares the user's translation command with the policy's final
action each tick. Agreement executes the policy; sustained disagreement first
pauses the robot for a configurable number of ticks, then hands control to
the user for as long as their input direction persists. Arbitration is
discrete: each tick executes exactly one of the final action, a zero action,
the scaled user command, or a direct rotation bypass, never a blend.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .env import Env, Metrics
from .types import (MAX_STEP, Provenance, RobotAction, Step, StepSource,
                    TaskState, Trajectory, UserAction)


@dataclass(frozen=True)
class GateConfig:
    cosine_threshold: float = 0.5
    no_input_epsilon: float = 1e-3
    pause_ticks: int = 3                 # ticks held still before an override
    persistence_cosine: float = 0.9      # "same input" test against the pause-opening command

    def __post_init__(self):
        if not -1.0 <= self.cosine_threshold <= 1.0:
            raise ValueError("cosine_threshold must lie in [-1, 1]")
        if self.pause_ticks < 1:
            raise ValueError("pause_ticks must be >= 1")


class GateOutcome(enum.Enum):
    EXECUTE_FINAL = "execute_final"
    PAUSE = "pause"
    EXECUTE_USER = "execute_user"
    EXECUTE_FINAL_NO_INPUT = "execute_final_no_input"
    EXECUTE_ROTATION_BYPASS = "execute_rotation_bypass"


_COSINE_OUTCOMES = {GateOutcome.EXECUTE_FINAL, GateOutcome.PAUSE,
                    GateOutcome.EXECUTE_USER}


@dataclass(frozen=True)
class GateDecision:
    outcome: GateOutcome
    cosine: float | None = None

    def __post_init__(self):
        if (self.cosine is not None) != (self.outcome in _COSINE_OUTCOMES):
            raise ValueError(f"cosine must accompany exactly {_COSINE_OUTCOMES}")


def _cosine(a: np.ndarray, b: np.ndarray) -> float:
    na, nb = float(np.linalg.norm(a)), float(np.linalg.norm(b))
    if na < 1e-12 or nb < 1e-12:
        return 0.0
    return float(np.dot(a, b) / (na * nb))


class Gate:
    """Stateful arbitration gate; decisions depend on command directions only,
    never magnitudes."""

    def __init__(self, cfg: GateConfig):
        self.cfg = cfg
        self._pauses = 0
        self._reference: np.ndarray | None = None
        self._overriding = False

    def _reset(self) -> None:
        self._pauses = 0
        self._reference = None
        self._overriding = False

    def decide(self, user: UserAction, final: RobotAction) -> GateDecision:
        if user.rotation_bypass is not None:
            self._reset()
            return GateDecision(GateOutcome.EXECUTE_ROTATION_BYPASS)
        u = user.translation
        if float(np.linalg.norm(u)) < self.cfg.no_input_epsilon:
            self._reset()
            return GateDecision(GateOutcome.EXECUTE_FINAL_NO_INPUT)
        cos = _cosine(u, final.translation)
        if cos >= self.cfg.cosine_threshold:
            self._reset()
            return GateDecision(GateOutcome.EXECUTE_FINAL, cos)
        # disagreement: pause, then yield to a persistent user
        persisting = (
            self._reference is not None
            and _cosine(u, self._reference) >= self.cfg.persistence_cosine
        )
        if not persisting:
            self._pauses = 1
            self._reference = u.copy()
            self._overriding = False
            return GateDecision(GateOutcome.PAUSE, cos)
        if self._overriding or self._pauses >= self.cfg.pause_ticks:
            self._overriding = True
            return GateDecision(GateOutcome.EXECUTE_USER, cos)
        self._pauses += 1
        return GateDecision(GateOutcome.PAUSE, cos)


def user_to_robot_action(user: UserAction, max_step: float = MAX_STEP) -> RobotAction:
    """Map a normalized user command to an executable delta: translation scaled
    per axis by max_step, or the bypass rotation passed through unchanged."""
    if user.rotation_bypass is not None:
        return RobotAction(np.concatenate([np.zeros(3), user.rotation_bypass]))
    return RobotAction(np.concatenate([user.translation * max_step, np.zeros(3)]))


PolicyFn = Callable[[TaskState, UserAction], RobotAction]
InputSource = Callable[[TaskState], UserAction]


@dataclass
class TrialLog:
    trajectory: Trajectory
    metrics: Metrics
    decisions: list[GateDecision]


class TrialRunner:
    """Tick-by-tick execution of one interaction trial.

    Per tick: apply any gripper toggle, query the policy, gate, execute the
    chosen action, and log the step. Pause ticks execute a zero action and are
    logged as policy steps. Both the offline loop and the live service drive
    this class, so their trials are identical by construction.
    """

    def __init__(self, env: Env, policy_fn: PolicyFn, gate_cfg: GateConfig, *,
                 step_budget: int = 2000, trial_index: int = 0,
                 max_step: float = MAX_STEP):
        self.env = env
        self.policy_fn = policy_fn
        self.gate = Gate(gate_cfg)
        self.step_budget = step_budget
        self.trial_index = trial_index
        self.max_step = max_step
        self.steps: list[Step] = []
        self.decisions: list[GateDecision] = []
        self.metrics = Metrics()

    @property
    def done(self) -> bool:
        return self.env.done or len(self.steps) >= self.step_budget

    def tick(self, user: UserAction) -> GateDecision | None:
        if self.done:
            return None
        if user.gripper_toggle:
            self.env.apply_toggle()
        state_t = self.env.state
        final = self.policy_fn(state_t, user)
        decision = self.gate.decide(user, final)
        if decision.outcome in (GateOutcome.EXECUTE_FINAL,
                                GateOutcome.EXECUTE_FINAL_NO_INPUT):
            delta, source = final.delta, StepSource.POLICY
        elif decision.outcome is GateOutcome.PAUSE:
            delta, source = np.zeros(6), StepSource.POLICY
            self.metrics.pause_count += 1
        else:  # EXECUTE_USER or EXECUTE_ROTATION_BYPASS
            delta = user_to_robot_action(user, self.max_step).delta
            source = StepSource.USER_OVERRIDE
            if decision.outcome is GateOutcome.EXECUTE_USER:
                self.metrics.override_count += 1
        executed, _ = self.env.execute(delta)
        self.steps.append(Step(state_t, user, executed, source, decision.cosine))
        self.decisions.append(decision)
        self.env.update_completion()
        return decision

    def finish(self) -> TrialLog:
        steps = self.steps
        if not steps:  # degenerate layout solved at tick zero
            steps = [Step(self.env.state, UserAction.idle(), RobotAction.zero(),
                          StepSource.POLICY)]
        self.metrics.completion_steps = len(steps)
        self.metrics.collision_count = self.env.collision_count
        self.metrics.success = self.env.done
        trajectory = Trajectory(self.env.task.name, self.trial_index,
                                tuple(steps), Provenance.INTERACTION)
        return TrialLog(trajectory, self.metrics, self.decisions)


def run_trial(env: Env, policy_fn: PolicyFn, gate_cfg: GateConfig,
              input_source: InputSource, *, step_budget: int = 2000,
              trial_index: int = 0, max_step: float = MAX_STEP) -> TrialLog:
    """Run one interaction trial at a fixed tick until the task completes or
    the step budget runs out (the trial is then marked failed but its
    trajectory is still returned)."""
    runner = TrialRunner(env, policy_fn, gate_cfg, step_budget=step_budget,
                         trial_index=trial_index, max_step=max_step)
    while not runner.done:
        runner.tick(input_source(env.state))
    return runner.finish()
