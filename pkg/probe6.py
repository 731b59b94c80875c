"""Sweep fine-tune data policy and lr on the benchmark (temporary)."""
import sys
import numpy as np
import ilsa
from ilsa import nn
from ilsa.incremental import FinetuneConfig, build_corrected_trajectory, finetune
from ilsa.env import Env
from ilsa.arbitration import run_trial
from ilsa.types import StepSource

task = ilsa.cereal_pour()
params0, meta = nn.load_checkpoint("tmp5.ckpt")
pcfg = ilsa.PolicyConfig(**meta["policy"])
trajs = ilsa.generate_task_trajectories(task, ilsa.GenConfig(rng_seed=7))

# how many zero-action pause steps survive correction?
oracle = ilsa.make_oracle(task, ilsa.OracleConfig())
p = params0.copy()
env = Env(task, ilsa.layout_for(task, 11, 0))
log = run_trial(env, ilsa.make_policy_fn(p, pcfg), ilsa.GateConfig(), oracle)
corr = build_corrected_trajectory(log.trajectory, 0.01, 1e-6,
                                  np.random.default_rng(0))
zero_steps = sum(1 for s in corr.steps
                 if np.allclose(s.robot_action.delta, 0) and not s.user_action.gripper_toggle)
print(f"trial len {len(log.trajectory)} -> corrected len {len(corr)}; "
      f"leftover zero-action steps {zero_steps}", flush=True)

seeds = [11, 23, 37]
for accumulate in (True, False):
    for lr in (3e-5, 1e-5):
        t1s, t4s, allsteps = [], [], []
        for seed in seeds:
            params = params0.copy()
            policy_fn = ilsa.make_policy_fn(params, pcfg)
            collected = []
            steps_per_trial = []
            for k in range(4):
                env = Env(task, ilsa.layout_for(task, seed, k))
                log = run_trial(env, policy_fn, ilsa.GateConfig(), oracle,
                                trial_index=k)
                steps_per_trial.append(log.metrics.completion_steps)
                if accumulate:
                    collected.append(log.trajectory)
                else:
                    collected = [log.trajectory]
                rng = np.random.Generator(np.random.PCG64(
                    np.random.SeedSequence(entropy=seed, spawn_key=(1000 + k,))))
                finetune(params, FinetuneConfig("ilsa", lr=lr), pcfg,
                         list(collected), trajs, rng)
            t1s.append(steps_per_trial[0]); t4s.append(steps_per_trial[3])
            allsteps.append(steps_per_trial)
        print(f"accumulate={accumulate} lr={lr}: "
              f"{allsteps} t1 {np.mean(t1s):.0f} t4 {np.mean(t4s):.0f} "
              f"ratio {np.mean(t4s)/np.mean(t1s):.3f}", flush=True)
