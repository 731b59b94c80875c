"""Probe longer training with lr decay; report per-leg speeds (temporary)."""
import sys
import time
import numpy as np
import ilsa
from ilsa import nn, policy as P
from ilsa.autodiff import Tensor
from dataclasses import asdict

task = ilsa.cereal_pour()
trajs = ilsa.generate_task_trajectories(task, ilsa.GenConfig(rng_seed=7))
pcfg = ilsa.PolicyConfig()

if "--train" in sys.argv:
    params = ilsa.build_policy_params(pcfg, 2, seed=0)
    arrays = P.trajectory_arrays(trajs, pcfg)
    rng = np.random.Generator(np.random.PCG64(0))
    t0 = time.time()
    h1 = P.run_epochs(params, pcfg, [(*arrays, P.ALL_TERMS)], epochs=150, lr=1e-3,
                      batch_size=512, trainable=set(nn.PARTITIONS), rng=rng)
    h2 = P.run_epochs(params, pcfg, [(*arrays, P.ALL_TERMS)], epochs=100, lr=2e-4,
                      batch_size=512, trainable=set(nn.PARTITIONS), rng=rng)
    print(f"{time.time()-t0:.0f}s loss {h1[0]:.4f} -> {h2[-1]:.5f}")
    nn.save_checkpoint("tmp_ckpt2.ckpt", params, {"policy": asdict(pcfg), "task": task.name, "object_count": 2})

params, meta = nn.load_checkpoint("tmp_ckpt2.ckpt")

# loss decomposition
arrays = P.trajectory_arrays(trajs, pcfg)
feats, users, targets = arrays
leaves = params.leaves(None)
a_m, a_f, _ = P.policy_graph(leaves, pcfg, Tensor(feats), Tensor(users))
dm = float(P.demo_loss_graph(a_m, Tensor(targets)).data.mean())
df = float(P.demo_loss_graph(a_f, Tensor(targets)).data.mean())
dd = float(P.direction_loss_graph(a_f, Tensor(users)).data.mean())
do = float(P.ordering_loss_graph(a_f, Tensor(users)).data.mean())
print(f"demo_m {dm:.4f} demo_f {df:.4f} direc {dd:.2e} order {do:.2e}")

# trial eval
free = ilsa.without_obstacles(task)
oracle = ilsa.make_oracle(free, ilsa.OracleConfig())
policy_fn = ilsa.make_policy_fn(params, pcfg)
from ilsa.env import Env
from ilsa.arbitration import run_trial

n_ok = 0
for i in range(20):
    state0 = ilsa.layout_for(free, 10000 + i, 0)
    path_steps = 0
    st = state0
    from ilsa.types import TaskState
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
    if i < 6 or not ok:
        # executed speed profile
        speeds = [np.linalg.norm(s.robot_action.delta[:3]) for s in log.trajectory.steps]
        print(f"layout {i}: path={path_steps} steps={m.completion_steps} "
              f"pauses={m.pause_count} ovr={m.override_count} ok={m.success} "
              f"mean_speed={np.mean(speeds):.4f}")
print(f"{n_ok}/20 passed")
