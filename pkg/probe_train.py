"""Probe pretraining configurations for loss floor (temporary tuning script)."""
import time
import numpy as np
import ilsa
from ilsa import policy as P
from ilsa.autodiff import Tensor
from ilsa import nn, autodiff as ad


def decompose(params, pcfg, arrays):
    feats, users, targets = arrays
    leaves = params.leaves(None)
    f, u, tg = Tensor(feats), Tensor(users), Tensor(targets)
    a_m, a_f, _ = P.policy_graph(leaves, pcfg, f, u)
    dm = float(P.demo_loss_graph(a_m, tg).data.mean())
    df = float(P.demo_loss_graph(a_f, tg).data.mean())
    dd = float(P.direction_loss_graph(a_f, u).data.mean())
    do = float(P.ordering_loss_graph(a_f, u).data.mean())
    return dm, df, dd, do


def run(tag, pcfg, epochs, lr_schedule, batch=512):
    t = ilsa.cereal_pour()
    trajs = ilsa.generate_task_trajectories(t, ilsa.GenConfig(trajectories_per_task=50, rng_seed=7))
    params = ilsa.build_policy_params(pcfg, 2, seed=0)
    arrays = P.trajectory_arrays(trajs)
    rng = np.random.Generator(np.random.PCG64(0))
    datasets = [(*arrays, P.ALL_TERMS)]
    t0 = time.time()
    hist = []
    for block_epochs, lr in lr_schedule:
        hist += P.run_epochs(params, pcfg, datasets, epochs=block_epochs, lr=lr,
                             batch_size=batch, trainable=set(nn.PARTITIONS), rng=rng)
    dm, df, dd, do = decompose(params, pcfg, arrays)
    print(f"[{tag}] {time.time()-t0:.0f}s first={hist[0]:.4f} last={hist[-1]:.4f} "
          f"ratio={hist[-1]/hist[0]:.3f} | demo_m {dm:.2e} demo_f {df:.2e} "
          f"direc {dd:.2e} order {do:.2e}", flush=True)
    return params, hist


if __name__ == "__main__":
    run("constant-150", ilsa.PolicyConfig(), 150, [(150, 1e-3)])
    run("decay-150", ilsa.PolicyConfig(), 150, [(100, 1e-3), (35, 3e-4), (15, 1e-4)])
    run("hidden256-decay", ilsa.PolicyConfig(mlp_hidden=256), 150,
        [(100, 1e-3), (35, 3e-4), (15, 1e-4)])
