"""Retrain with intermediate-skip head; sanity + benchmark sweep (temporary)."""
import sys
import time
from dataclasses import asdict
import numpy as np
import ilsa
from ilsa import nn
from ilsa.incremental import FinetuneConfig, finetune
from ilsa.env import Env
from ilsa.arbitration import run_trial
from ilsa.types import TaskState

task = ilsa.cereal_pour()
pcfg = ilsa.PolicyConfig()
trajs = ilsa.generate_task_trajectories(task, ilsa.GenConfig(rng_seed=7))

if "--train" in sys.argv:
    params = ilsa.build_policy_params(pcfg, 2, seed=0)
    t0 = time.time()
    h = ilsa.pretrain(params, pcfg, trajs,
                      ilsa.TrainConfig(batch_size=512, seed=0,
                                       schedule=((150, 1e-3), (100, 2e-4), (50, 5e-5))))
    print(f"pretrain {time.time()-t0:.0f}s loss {h[0]:.4f} -> {h[-1]:.5f}", flush=True)
    nn.save_checkpoint("tmp9.ckpt", params,
                       {"policy": asdict(pcfg), "task": task.name, "object_count": 2})

params0, meta = nn.load_checkpoint("tmp9.ckpt")
print("skips:", np.round(params0["final_head.user_skip"], 3),
      np.round(params0["final_head.intermediate_skip"], 3), flush=True)

if "--sanity" in sys.argv:
    free = ilsa.without_obstacles(task)
    oracle = ilsa.make_oracle(free, ilsa.OracleConfig())
    policy_fn = ilsa.make_policy_fn(params0, pcfg)
    n_ok = 0
    for i in range(20):
        state0 = ilsa.layout_for(free, 10000 + i, 0)
        path_steps = 0
        st = state0
        for sub in free.subtasks:
            tgt = ilsa.subtask_target(sub, st)
            path_steps += len(ilsa.interpolate(st.ee_pose, tgt, 0.01)) - 1
            st = TaskState(tgt, st.gripper_closed, st.object_poses, st.grasped_object)
            if sub.kind.value in ("grasp", "release"):
                path_steps += 1
                st = TaskState(st.ee_pose, sub.kind.value == "grasp", st.object_poses,
                               0 if sub.kind.value == "grasp" else None)
        env = Env(free, state0)
        log = run_trial(env, policy_fn, ilsa.GateConfig(), oracle,
                        step_budget=int(1.5 * path_steps))
        m = log.metrics
        ok = m.success and m.override_count == 0
        n_ok += ok
        if not ok:
            print(f"  FAIL layout {i}: path={path_steps} steps={m.completion_steps} "
                  f"pauses={m.pause_count} ovr={m.override_count} succ={m.success}", flush=True)
    print(f"sanity: {n_ok}/20", flush=True)

if "--bench" in sys.argv:
    oracle = ilsa.make_oracle(task, ilsa.OracleConfig())
    seeds = [11, 23, 37]
    for accumulate in (False, True):
        for lr in (1e-4, 3e-5):
            rows, t1s, t4s = [], [], []
            for seed in seeds:
                params = params0.copy()
                policy_fn = ilsa.make_policy_fn(params, pcfg)
                collected = []
                steps_per_trial = []
                ovr_per_trial = []
                for k in range(4):
                    env = Env(task, ilsa.layout_for(task, seed, k))
                    log = run_trial(env, policy_fn, ilsa.GateConfig(), oracle, trial_index=k)
                    steps_per_trial.append(log.metrics.completion_steps)
                    ovr_per_trial.append(log.metrics.override_count)
                    if accumulate:
                        collected.append(log.trajectory)
                    else:
                        collected = [log.trajectory]
                    rng = np.random.Generator(np.random.PCG64(
                        np.random.SeedSequence(entropy=seed, spawn_key=(1000 + k,))))
                    finetune(params, FinetuneConfig("ilsa", lr=lr), pcfg,
                             list(collected), trajs, rng)
                rows.append((steps_per_trial, ovr_per_trial))
                t1s.append(steps_per_trial[0]); t4s.append(steps_per_trial[3])
            print(f"accumulate={accumulate} lr={lr}: {rows}", flush=True)
            print(f"  t1 {np.mean(t1s):.0f} t4 {np.mean(t4s):.0f} "
                  f"ratio {np.mean(t4s)/np.mean(t1s):.3f}", flush=True)
    # static reference
    rows = []
    for seed in seeds:
        policy_fn = ilsa.make_policy_fn(params0, pcfg)
        steps_per_trial = []
        for k in range(4):
            env = Env(task, ilsa.layout_for(task, seed, k))
            log = run_trial(env, policy_fn, ilsa.GateConfig(), oracle, trial_index=k)
            steps_per_trial.append(log.metrics.completion_steps)
        rows.append(steps_per_trial)
    print(f"static: {rows} t4 {np.mean([r[3] for r in rows]):.0f}", flush=True)
