"""Sweep balanced fine-tuning on the benchmark (temporary)."""
import numpy as np
import ilsa
from ilsa import nn
from ilsa.incremental import FinetuneConfig, finetune
from ilsa.env import Env
from ilsa.arbitration import run_trial

task = ilsa.cereal_pour()
params0, meta = nn.load_checkpoint("tmp5.ckpt")
pcfg = ilsa.PolicyConfig(**meta["policy"])
trajs = ilsa.generate_task_trajectories(task, ilsa.GenConfig(rng_seed=7))
oracle = ilsa.make_oracle(task, ilsa.OracleConfig())
free = ilsa.without_obstacles(task)
free_oracle = ilsa.make_oracle(free, ilsa.OracleConfig())

seeds = [11, 23, 37]
for accumulate in (True, False):
    for lr in (1e-4, 3e-5):
        rows, t1s, t4s = [], [], []
        retention = []
        for seed in seeds:
            params = params0.copy()
            policy_fn = ilsa.make_policy_fn(params, pcfg)
            collected = []
            steps_per_trial = []
            for k in range(4):
                env = Env(task, ilsa.layout_for(task, seed, k))
                log = run_trial(env, policy_fn, ilsa.GateConfig(), oracle, trial_index=k)
                steps_per_trial.append(log.metrics.completion_steps)
                if accumulate:
                    collected.append(log.trajectory)
                else:
                    collected = [log.trajectory]
                rng = np.random.Generator(np.random.PCG64(
                    np.random.SeedSequence(entropy=seed, spawn_key=(1000 + k,))))
                finetune(params, FinetuneConfig("ilsa", lr=lr), pcfg,
                         list(collected), trajs, rng)
            rows.append(steps_per_trial)
            t1s.append(steps_per_trial[0]); t4s.append(steps_per_trial[3])
            # retention: obstacle-free completion with the adapted policy
            env = Env(free, ilsa.layout_for(free, 10000 + seed, 0))
            log = run_trial(env, policy_fn, ilsa.GateConfig(), free_oracle,
                            step_budget=250)
            retention.append(log.metrics.completion_steps if log.metrics.success else -1)
        print(f"balance accumulate={accumulate} lr={lr}: {rows} "
              f"t1 {np.mean(t1s):.0f} t4 {np.mean(t4s):.0f} "
              f"ratio {np.mean(t4s)/np.mean(t1s):.3f} retention {retention}", flush=True)
