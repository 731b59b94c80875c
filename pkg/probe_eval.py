"""Pretrain once, save checkpoint, evaluate obstacle-free completion (temporary tuning script)."""
import sys
import time
import numpy as np
import ilsa
from ilsa import nn, policy as P

task = ilsa.cereal_pour()
trajs = ilsa.generate_task_trajectories(task, ilsa.GenConfig(rng_seed=7))

if "--train" in sys.argv:
    pcfg = ilsa.PolicyConfig()
    params = ilsa.build_policy_params(pcfg, 2, seed=0)
    t0 = time.time()
    hist = ilsa.pretrain(params, pcfg, trajs, ilsa.TrainConfig(epochs=150, lr=1e-3, batch_size=512, seed=0))
    print(f"pretrained in {time.time()-t0:.0f}s loss {hist[0]:.5f} -> {hist[-1]:.6f}")
    from dataclasses import asdict
    nn.save_checkpoint("tmp_ckpt.ckpt", params, {"policy": asdict(pcfg), "task": task.name, "object_count": 2})

params, meta = nn.load_checkpoint("tmp_ckpt.ckpt")
pcfg = ilsa.PolicyConfig(**meta["policy"])

# held-out obstacle-free layouts: seeds 10000+
free = ilsa.without_obstacles(task)
oracle = ilsa.make_oracle(free, ilsa.OracleConfig())
policy_fn = ilsa.make_policy_fn(params, pcfg)
from ilsa.env import Env
from ilsa.arbitration import run_trial

n_ok = 0
t0 = time.time()
for i in range(20):
    state0 = ilsa.layout_for(free, 10000 + i, 0)
    # interpolation path length for this layout
    path_steps = 0
    st = state0
    for sub in free.subtasks:
        tgt = ilsa.subtask_target(sub, st)
        poses = ilsa.interpolate(st.ee_pose, tgt, 0.01)
        path_steps += len(poses) - 1
        from ilsa.types import TaskState
        st = TaskState(tgt, st.gripper_closed, st.object_poses, st.grasped_object)
        if sub.kind.value in ("grasp", "release"):
            path_steps += 1
            st = TaskState(st.ee_pose, sub.kind.value == "grasp", st.object_poses,
                           0 if sub.kind.value == "grasp" else None)
    budget = int(1.5 * path_steps)
    env = Env(free, state0)
    log = run_trial(env, policy_fn, ilsa.GateConfig(), oracle, step_budget=budget)
    m = log.metrics
    ok = m.success and m.override_count == 0
    n_ok += ok
    print(f"layout {i}: path={path_steps} steps={m.completion_steps} pauses={m.pause_count} "
          f"overrides={m.override_count} success={m.success} -> {'OK' if ok else 'FAIL'}")
print(f"{n_ok}/20 in {time.time()-t0:.1f}s")
