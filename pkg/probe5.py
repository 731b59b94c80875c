"""Probe: polish schedule + ft-lr sweep on the benchmark (temporary)."""
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
    from ilsa.policy import run_epochs, trajectory_arrays, ALL_TERMS
    arrays = trajectory_arrays(trajs, pcfg)
    rng = np.random.Generator(np.random.PCG64(0))
    t0 = time.time()
    h = run_epochs(params, pcfg, [(*arrays, ALL_TERMS)], epochs=150, lr=1e-3,
                   batch_size=512, trainable=set(nn.PARTITIONS), rng=rng)
    h += run_epochs(params, pcfg, [(*arrays, ALL_TERMS)], epochs=100, lr=2e-4,
                    batch_size=512, trainable=set(nn.PARTITIONS), rng=rng)
    h += run_epochs(params, pcfg, [(*arrays, ALL_TERMS)], epochs=50, lr=5e-5,
                    batch_size=512, trainable=set(nn.PARTITIONS), rng=rng)
    print(f"pretrain {time.time()-t0:.0f}s loss {h[0]:.4f} -> {h[-1]:.5f}", flush=True)
    nn.save_checkpoint("tmp5.ckpt", params,
                       {"policy": asdict(pcfg), "task": task.name, "object_count": 2})

params, meta = nn.load_checkpoint("tmp5.ckpt")

if "--sanity" in sys.argv:
    free = ilsa.without_obstacles(task)
    oracle = ilsa.make_oracle(free, ilsa.OracleConfig())
    policy_fn = ilsa.make_policy_fn(params, pcfg)
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
            # where did it disagree?
            where = [(t, round(d.cosine, 2)) for t, d in enumerate(log.decisions)
                     if d.cosine is not None and d.cosine < 0.5][:6]
            print(f"  FAIL layout {i}: path={path_steps} steps={m.completion_steps} "
                  f"ovr={m.override_count} low-cos at {where}", flush=True)
    print(f"sanity: {n_ok}/20", flush=True)

if "--bench" in sys.argv:
    import ilsa.incremental as inc
    seeds = [11, 23, 37]

    def run_variant(variant, ft_lr=None):
        t1s, t4s = [], []
        for seed in seeds:
            ft = inc.FinetuneConfig(variant=variant, lr=ft_lr) if ft_lr else None
            res = ilsa.run_experiment(task, params, pcfg, variant, seed, trajs,
                                      ft_cfg=ft)
            steps = res.completion_steps()
            pauses = [m.pause_count for m in res.metrics]
            ovr = [m.override_count for m in res.metrics]
            t1s.append(steps[0]); t4s.append(steps[3])
            print(f"  {variant} seed {seed}: steps={steps} ovr={ovr} pauses={pauses}", flush=True)
        print(f"  {variant}: t1 {np.mean(t1s):.0f} t4 {np.mean(t4s):.0f} "
              f"ratio {np.mean(t4s)/np.mean(t1s):.3f}", flush=True)

    run_variant("static")
    for ft_lr in (1e-4, 3e-5):
        print(f"--- ilsa at ft_lr {ft_lr}", flush=True)
        run_variant("ilsa", ft_lr)
