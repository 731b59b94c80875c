"""Live teleoperation service.

One interactive session at a time over a websocket at /session, speaking JSON
text frames: {"kind": ..., "seq": ..., "payload": {...}}. The server ticks the
trial loop, streams StateUpdate/GateEvent per tick, announces TrialComplete,
runs the incremental update on FinetuneRequest (streaming one
FinetuneProgress per epoch, then MetricsSummary), and starts the next trial
when the client acknowledges with its own TrialComplete. All trajectories,
checkpoints, and metrics persist under the session directory.

Two tick modes: free-running at the configured rate (live UI), or lockstep
(`/session?lockstep=1`) where the server advances exactly one tick per
UserInput, which makes scripted online runs reproduce offline trials bit for
bit.
"""

from __future__ import annotations

import asyncio
import json
import uuid
from dataclasses import asdict, replace
from pathlib import Path

import numpy as np
from fastapi import FastAPI, WebSocket, WebSocketDisconnect

from . import io
from .arbitration import GateOutcome, TrialRunner
from .config import AppConfig
from .env import Env
from .errors import IlsaError
from .incremental import FinetuneConfig, finetune
from .nn import ParamSet, save_checkpoint
from .policy import PolicyConfig
from .simuser import layout_for, make_policy_fn
from .tasks import builtin_tasks
from .types import StepSource, TaskSpec, UserAction, task_to_json

N_TRIALS = 4


def _parse_user_input(payload: dict) -> UserAction:
    translation = np.asarray(payload.get("translation", [0, 0, 0]), dtype=np.float64)
    rotation = payload.get("rotation")
    return UserAction(
        translation=translation if rotation is None else np.zeros(3),
        rotation_bypass=None if rotation is None else np.asarray(rotation, dtype=np.float64),
        gripper_toggle=bool(payload.get("gripper_toggle", False)),
    )


class Session:
    """State machine for one live session across N_TRIALS trials."""

    def __init__(self, task: TaskSpec, params: ParamSet, policy_cfg: PolicyConfig,
                 app_cfg: AppConfig, pretrain_trajs, root: Path, seed: int):
        self.id = uuid.uuid4().hex[:12]
        self.task = task
        self.params = params.copy()
        self.policy_cfg = policy_cfg
        self.app_cfg = app_cfg
        self.pretrain_trajs = pretrain_trajs
        self.seed = seed
        self.dir = root / "sessions" / self.id
        self.dir.mkdir(parents=True, exist_ok=True)
        self.trial_index = 0
        self.tick_count = 0
        self.runner: TrialRunner | None = None
        self.trial_logs: list[dict] = []
        self.collected = []          # interaction trajectories for fine-tuning
        self.trial_finalized = False
        self.finetuned_after_trial = False
        self.record = {
            "session_id": self.id,
            "task_id": task.name,
            "variant": "ilsa",
            "trial_index": 0,
            "checkpoints": [],
            "trajectories": [],
            "metrics": [],
        }
        self.start_trial()

    # -- trial lifecycle ---------------------------------------------------
    def start_trial(self) -> None:
        env = Env(self.task, layout_for(self.task, self.seed, self.trial_index))
        self.runner = TrialRunner(
            env, make_policy_fn(self.params, self.policy_cfg), self.app_cfg.gate,
            step_budget=self.app_cfg.step_budget, trial_index=self.trial_index,
        )
        self.tick_count = 0
        self.trial_finalized = False
        self.finetuned_after_trial = False

    def state_payload(self) -> dict:
        state = self.runner.env.state
        return {
            "ee": list(state.ee_pose.as_array()),
            "gripper": state.gripper_closed,
            "objects": [list(p.as_array()) for p in state.object_poses],
            "grasped": state.grasped_object,
            "obstacles": [b.to_json() for b in self.task.obstacles],
            "trial": self.trial_index,
            "tick": self.tick_count,
            "done": self.runner.env.done,
            "trial_done": self.runner.done,  # task done or step budget spent
            "subtask": self.runner.env.subtask_index,
        }

    def finalize_trial(self, aborted: bool = False) -> dict:
        log = self.runner.finish()
        traj_path = self.dir / f"trial_{self.trial_index}.jsonl"
        io.write_trajectories(traj_path, [log.trajectory], seed=self.seed)
        if aborted:
            io.append_aborted_marker(traj_path)
        metrics = log.metrics.to_json()
        metrics["aborted"] = aborted
        self.trial_logs.append(metrics)
        self.record["trajectories"].append(str(traj_path))
        self.record["metrics"].append(metrics)
        self.record["trial_index"] = self.trial_index
        if not aborted:
            self.collected.append(log.trajectory)
        self.trial_finalized = True
        self._persist_record()
        return metrics

    def run_finetune(self) -> tuple[list[float], str]:
        cfg = replace(self.app_cfg.finetune, variant="ilsa")
        rng = np.random.Generator(np.random.PCG64(
            np.random.SeedSequence(entropy=self.seed,
                                   spawn_key=(1000 + self.trial_index,))
        ))
        _, report = finetune(self.params, cfg, self.policy_cfg,
                             list(self.collected), self.pretrain_trajs, rng)
        ckpt = self.dir / f"ckpt_after_trial_{self.trial_index}.ckpt"
        save_checkpoint(ckpt, self.params,
                        {"policy": asdict(self.policy_cfg),
                         "task": self.task.name,
                         "object_count": self.task.object_count})
        self.record["checkpoints"].append(str(ckpt))
        self.finetuned_after_trial = True
        self._persist_record()
        return report.per_epoch_losses, str(ckpt)

    def advance(self) -> bool:
        """Move to the next trial; False when the protocol is finished."""
        if self.trial_index + 1 >= N_TRIALS:
            return False
        self.trial_index += 1
        self.start_trial()
        return True

    def summary(self) -> dict:
        return {"session_id": self.id, "trials": self.trial_logs,
                "trial_index": self.trial_index}

    def _persist_record(self) -> None:
        (self.dir / "session.json").write_text(json.dumps(self.record, indent=2))
        (self.dir / "metrics.json").write_text(json.dumps(self.trial_logs, indent=2))


def build_service(task: TaskSpec, params: ParamSet, policy_cfg: PolicyConfig,
                  app_cfg: AppConfig, pretrain_trajs, root: Path,
                  seed: int = 0) -> FastAPI:
    app = FastAPI(title="ilsa service")
    active: dict[str, Session | None] = {"session": None}
    sessions: dict[str, Session] = {}

    @app.get("/tasks")
    def tasks():
        return {"tasks": [task_to_json(t) for t in builtin_tasks().values()],
                "serving": task.name}

    @app.get("/sessions/{sid}/metrics")
    def session_metrics(sid: str):
        if sid in sessions:
            return sessions[sid].summary()
        path = root / "sessions" / sid / "metrics.json"
        if path.exists():
            return {"session_id": sid, "trials": json.loads(path.read_text())}
        return {"error": f"unknown session {sid!r}"}

    @app.websocket("/session")
    async def session_socket(ws: WebSocket, lockstep: int = 0):
        await ws.accept()
        seq = {"n": 0}

        async def send(kind: str, payload: dict):
            msg = {"kind": kind, "seq": seq["n"], "payload": payload}
            seq["n"] += 1
            await ws.send_text(json.dumps(msg))

        if active["session"] is not None:
            await send("Error", {"message": "session busy"})
            await ws.close()
            return
        session = Session(task, params, policy_cfg, app_cfg, pretrain_trajs,
                          root, seed)
        active["session"] = session
        sessions[session.id] = session
        latest: dict[str, UserAction | None] = {"input": None}
        stop = asyncio.Event()

        async def do_tick(user: UserAction):
            decision = session.runner.tick(user)
            session.tick_count += 1
            if decision is not None:
                src = ("user" if decision.outcome in
                       (GateOutcome.EXECUTE_USER,
                        GateOutcome.EXECUTE_ROTATION_BYPASS) else "policy")
                await send("GateEvent", {"outcome": decision.outcome.value,
                                         "cosine": decision.cosine,
                                         "source": src})
            await send("StateUpdate", session.state_payload())
            if session.runner.done and not session.trial_finalized:
                metrics = session.finalize_trial()
                await send("TrialComplete", {"trial": session.trial_index,
                                             "metrics": metrics})

        async def free_run():
            period = 1.0 / session.app_cfg.service_tick_hz
            while not stop.is_set():
                await asyncio.sleep(period)
                if session.runner.done or session.trial_finalized:
                    continue
                user = latest["input"]
                if user is not None:
                    await do_tick(user)

        ticker = None
        await send("Hello", {
            "session_id": session.id,
            "task": task_to_json(task),
            "trial": session.trial_index,
            "n_trials": N_TRIALS,
            "tick_hz": session.app_cfg.service_tick_hz,
            "lockstep": bool(lockstep),
        })
        await send("StateUpdate", session.state_payload())
        if not lockstep:
            ticker = asyncio.create_task(free_run())
        try:
            while True:
                raw = await ws.receive_text()
                try:
                    msg = json.loads(raw)
                    kind = msg["kind"]
                    payload = msg.get("payload", {})
                except (json.JSONDecodeError, TypeError, KeyError) as e:
                    await send("Error", {"message": f"malformed message: {e}"})
                    continue
                try:
                    if kind == "UserInput":
                        user = _parse_user_input(payload)
                        if lockstep:
                            if not session.runner.done:
                                await do_tick(user)
                        else:
                            latest["input"] = user
                    elif kind == "FinetuneRequest":
                        if not session.trial_finalized:
                            await send("Error", {"message": "trial still running"})
                            continue
                        if session.finetuned_after_trial:
                            await send("Error", {"message": "already fine-tuned"})
                            continue
                        losses, ckpt = session.run_finetune()
                        for epoch, loss in enumerate(losses, start=1):
                            await send("FinetuneProgress",
                                       {"epoch": epoch, "loss": loss})
                        await send("MetricsSummary",
                                   {**session.summary(), "checkpoint": ckpt,
                                    "finetuned": True})
                    elif kind == "TrialComplete":
                        if not session.trial_finalized:
                            await send("Error", {"message": "trial still running"})
                            continue
                        if session.advance():
                            await send("Hello", {
                                "session_id": session.id,
                                "task": task_to_json(task),
                                "trial": session.trial_index,
                                "n_trials": N_TRIALS,
                                "tick_hz": session.app_cfg.service_tick_hz,
                                "lockstep": bool(lockstep),
                            })
                            await send("StateUpdate", session.state_payload())
                        else:
                            await send("MetricsSummary",
                                       {**session.summary(), "finished": True})
                    else:
                        await send("Error",
                                   {"message": f"unsupported message kind {kind!r}"})
                except IlsaError as e:
                    await send("Error", {"message": str(e)})
        except WebSocketDisconnect:
            if session.runner is not None and not session.trial_finalized \
                    and session.runner.steps:
                session.finalize_trial(aborted=True)
        finally:
            stop.set()
            if ticker is not None:
                ticker.cancel()
            active["session"] = None

    return app
