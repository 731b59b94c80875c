"""End-to-end probe: pretrain, sanity eval, adaptation benchmark (temporary)."""
import sys
import time
from dataclasses import asdict
import numpy as np
import ilsa
from ilsa import nn
from ilsa.env import Env
from ilsa.arbitration import run_trial
from ilsa.types import TaskState

task = ilsa.cereal_pour()
pcfg = ilsa.PolicyConfig()
trajs = ilsa.generate_task_trajectories(task, ilsa.GenConfig(rng_seed=7))

if "--train" in sys.argv:
    params = ilsa.build_policy_params(pcfg, 2, seed=0)
    t0 = time.time()
    h1 = ilsa.pretrain(params, pcfg, trajs, ilsa.TrainConfig(epochs=150, lr=1e-3, batch_size=512, seed=0))
    from ilsa.policy import run_epochs, trajectory_arrays, ALL_TERMS
    arrays = trajectory_arrays(trajs, pcfg)
    rng = np.random.Generator(np.random.PCG64(1))
    h2 = run_epochs(params, pcfg, [(*arrays, ALL_TERMS)], epochs=100, lr=2e-4,
                    batch_size=512, trainable=set(nn.PARTITIONS), rng=rng)
    print(f"pretrain {time.time()-t0:.0f}s loss {h1[0]:.4f} -> {h2[-1]:.5f}", flush=True)
    nn.save_checkpoint("tmp_full.ckpt", params,
                       {"policy": asdict(pcfg), "task": task.name, "object_count": 2})

params, meta = nn.load_checkpoint("tmp_full.ckpt")

if "--sanity" in sys.argv:
    free = ilsa.without_obstacles(task)
    oracle = ilsa.make_oracle(free, ilsa.OracleConfig())
    policy_fn = ilsa.make_policy_fn(params, pcfg)
    n_ok = 0
    t0 = time.time()
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
        budget = int(1.5 * path_steps)
        env = Env(free, state0)
        log = run_trial(env, policy_fn, ilsa.GateConfig(), oracle, step_budget=budget)
        m = log.metrics
        ok = m.success and m.override_count == 0
        n_ok += ok
        flag = "OK " if ok else "FAIL"
        print(f"  {flag} layout {i}: path={path_steps} steps={m.completion_steps} "
              f"pauses={m.pause_count} ovr={m.override_count} succ={m.success}", flush=True)
    print(f"sanity: {n_ok}/20 in {time.time()-t0:.0f}s", flush=True)

if "--bench" in sys.argv:
    t0 = time.time()
    seeds = [11, 23, 37, 53, 71]
    for variant in ("ilsa", "static"):
        t1s, t4s = [], []
        for seed in seeds:
            res = ilsa.run_experiment(task, params, pcfg, variant, seed, trajs)
            steps = res.completion_steps()
            t1s.append(steps[0]); t4s.append(steps[3])
            mets = res.metrics
            print(f"  {variant} seed {seed}: steps={steps} "
                  f"ovr={[m.override_count for m in mets]} "
                  f"coll={[m.collision_count for m in mets]} "
                  f"succ={[m.success for m in mets]}", flush=True)
        print(f"{variant}: trial1 mean {np.mean(t1s):.1f} trial4 mean {np.mean(t4s):.1f} "
              f"ratio {np.mean(t4s)/np.mean(t1s):.3f}", flush=True)
    print(f"bench in {time.time()-t0:.0f}s", flush=True)
