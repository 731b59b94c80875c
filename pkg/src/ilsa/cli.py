"""Command-line interface.

Subcommands: gen-data, pretrain, trial, finetune, experiment, ablate, serve.
Exit codes: 0 success, 1 usage, 2 data/config problem, 3 training failure.
"""

from __future__ import annotations

import argparse
import json
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import io
from .arbitration import run_trial
from .config import AppConfig, data_dir, load_config
from .env import Env
from .errors import ConfigError, IlsaError, TrainingError
from .incremental import VARIANTS, FinetuneConfig, finetune
from .nn import load_checkpoint, save_checkpoint
from .policy import PolicyConfig, build_policy_params, pretrain
from .simuser import (layout_for, make_oracle, make_policy_fn, run_ablation,
                      run_experiment)
from .tasks import load_task, without_obstacles
from .trajgen import generate_task_trajectories


class _Parser(argparse.ArgumentParser):
    def error(self, message):  # usage problems exit 1, not argparse's 2
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        sys.exit(1)


def _policy_config_from_checkpoint(meta: dict) -> PolicyConfig:
    return PolicyConfig(**meta.get("policy", {}))


def _checkpoint_meta(cfg: PolicyConfig, task_name: str, object_count: int) -> dict:
    from dataclasses import asdict

    return {"policy": asdict(cfg), "task": task_name, "object_count": object_count}


def cmd_gen_data(args) -> int:
    app = load_config(args.config)
    task = load_task(args.task)
    gen = replace(app.gen, trajectories_per_task=args.n, rng_seed=args.seed)
    trajs = generate_task_trajectories(task, gen)
    io.write_trajectories(args.out, trajs, seed=args.seed)
    print(f"wrote {len(trajs)} trajectories "
          f"({sum(len(t) for t in trajs)} steps) to {args.out}", file=sys.stderr)
    return 0


def cmd_pretrain(args) -> int:
    app = load_config(args.config)
    task = load_task(args.task)
    gen = replace(app.gen, rng_seed=args.seed)
    if args.data:
        trajs = io.read_trajectory_files(args.data)
    else:
        trajs = generate_task_trajectories(task, gen)
    params = build_policy_params(app.policy, task.object_count, seed=args.seed)
    history = pretrain(params, app.policy, trajs, replace(app.train, seed=args.seed))
    save_checkpoint(args.out, params,
                    _checkpoint_meta(app.policy, task.name, task.object_count))
    if args.history:
        Path(args.history).write_text(json.dumps(history))
    print(f"pretrained on {len(trajs)} trajectories: "
          f"loss {history[0]:.4f} -> {history[-1]:.4f}; checkpoint {args.out}",
          file=sys.stderr)
    return 0


def cmd_trial(args) -> int:
    app = load_config(args.config)
    task = load_task(args.task)
    if args.obstacles == "off":
        task = without_obstacles(task)
    params, meta = load_checkpoint(args.ckpt)
    pcfg = _policy_config_from_checkpoint(meta)
    env = Env(task, layout_for(task, args.seed, args.trial))
    log = run_trial(env, make_policy_fn(params, pcfg), app.gate,
                    make_oracle(task, app.oracle),
                    step_budget=args.budget or app.step_budget,
                    trial_index=args.trial)
    if args.out:
        io.write_trajectories(args.out, [log.trajectory], seed=args.seed)
    print(json.dumps(log.metrics.to_json()))
    return 0


def cmd_finetune(args) -> int:
    app = load_config(args.config)
    params, meta = load_checkpoint(args.ckpt)
    pcfg = _policy_config_from_checkpoint(meta)
    new_trajs = io.read_trajectory_files(args.new)
    pretrain_trajs = io.read_trajectory_files([args.pretrain]) if args.pretrain else []
    cfg = replace(app.finetune, variant=args.variant, epochs=args.epochs)
    rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence(args.seed)))
    params, report = finetune(params, cfg, pcfg, new_trajs, pretrain_trajs, rng)
    save_checkpoint(args.out, params, meta)
    if args.report:
        Path(args.report).write_text(json.dumps(report.to_json(), indent=2))
    print(json.dumps(report.to_json()))
    return 0


def cmd_experiment(args) -> int:
    app = load_config(args.config)
    task = load_task(args.task)
    params, pcfg, pretrain_trajs = _pretrained(args, app, task)
    rows = []
    for seed in args.seeds:
        res = run_experiment(
            task, params, pcfg, args.variant, seed, pretrain_trajs,
            n_trials=args.trials, step_budget=app.step_budget,
            gate_cfg=app.gate, oracle_cfg=app.oracle,
            ft_cfg=replace(app.finetune, variant=args.variant)
            if args.variant != "static" else None,
        )
        rows.append({"seed": seed,
                     "metrics": [m.to_json() for m in res.metrics]})
        steps = res.completion_steps()
        print(f"seed {seed}: steps per trial {steps}", file=sys.stderr)
    out = {"task": task.name, "variant": args.variant, "experiments": rows}
    if args.out:
        Path(args.out).write_text(json.dumps(out, indent=2))
    print(json.dumps(out))
    return 0


def cmd_ablate(args) -> int:
    app = load_config(args.config)
    task = load_task(args.task)
    params, pcfg, pretrain_trajs = _pretrained(args, app, task)
    table = run_ablation(
        task, params, pcfg, args.variants, args.n, args.seed, pretrain_trajs,
        step_budget=app.step_budget,
    )
    if args.out:
        Path(args.out).write_text(json.dumps(table.to_json(), indent=2))
    if args.csv:
        Path(args.csv).write_text(table.to_csv())
    print(table.to_csv(), end="")
    print(f"ilsa best-or-tied at final trial (tracked expectation): "
          f"{table.ilsa_best_or_tied_at_final_trial}", file=sys.stderr)
    return 0


def cmd_serve(args) -> int:
    import uvicorn

    from .service import build_service

    app_cfg = load_config(args.config)
    task = load_task(args.task)
    params, meta = load_checkpoint(args.ckpt)
    pcfg = _policy_config_from_checkpoint(meta)
    pretrain_trajs = (io.read_trajectory_files([args.pretrain])
                      if args.pretrain else
                      generate_task_trajectories(task, app_cfg.gen))
    service = build_service(task, params, pcfg, app_cfg, pretrain_trajs,
                            data_dir(), seed=args.seed)
    uvicorn.run(service, host=args.host, port=args.port, log_level="warning")
    return 0


def _pretrained(args, app: AppConfig, task):
    """Load a checkpoint or pretrain from scratch (cached next to outputs)."""
    pretrain_trajs = generate_task_trajectories(
        task, replace(app.gen, rng_seed=args.data_seed))
    if args.ckpt:
        params, meta = load_checkpoint(args.ckpt)
        return params, _policy_config_from_checkpoint(meta), pretrain_trajs
    cache = data_dir() / f"pretrained_{task.name}_{args.data_seed}.ckpt"
    if cache.exists():
        params, meta = load_checkpoint(cache)
        return params, _policy_config_from_checkpoint(meta), pretrain_trajs
    print(f"no --ckpt given; pretraining {task.name} (cached at {cache})",
          file=sys.stderr)
    params = build_policy_params(app.policy, task.object_count, seed=args.data_seed)
    pretrain(params, app.policy, pretrain_trajs,
             replace(app.train, seed=args.data_seed))
    save_checkpoint(cache, params,
                    _checkpoint_meta(app.policy, task.name, task.object_count))
    return params, app.policy, pretrain_trajs


def build_parser() -> _Parser:
    p = _Parser(prog="ilsa", description=__doc__)
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp):
        sp.add_argument("--config", default=None, help="JSON config file")

    g = sub.add_parser("gen-data", help="generate a kinematic pretraining dataset")
    g.add_argument("--task", required=True)
    g.add_argument("--n", type=int, default=50)
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--out", required=True)
    common(g)
    g.set_defaults(fn=cmd_gen_data)

    t = sub.add_parser("pretrain", help="generate data (or load) and pretrain")
    t.add_argument("--task", required=True)
    t.add_argument("--out", required=True)
    t.add_argument("--seed", type=int, default=0)
    t.add_argument("--data", nargs="*", default=None, help="cached dataset JSONL")
    t.add_argument("--history", default=None, help="write loss history JSON here")
    common(t)
    t.set_defaults(fn=cmd_pretrain)

    r = sub.add_parser("trial", help="run one oracle-driven trial")
    r.add_argument("--task", required=True)
    r.add_argument("--ckpt", required=True)
    r.add_argument("--seed", type=int, default=0)
    r.add_argument("--trial", type=int, default=0)
    r.add_argument("--obstacles", choices=("on", "off"), default="on")
    r.add_argument("--out", default=None)
    r.add_argument("--budget", type=int, default=None)
    common(r)
    r.set_defaults(fn=cmd_trial)

    f = sub.add_parser("finetune", help="one incremental update from logs")
    f.add_argument("--variant", choices=VARIANTS, default="ilsa")
    f.add_argument("--ckpt", required=True)
    f.add_argument("--new", nargs="+", required=True)
    f.add_argument("--pretrain", default=None)
    f.add_argument("--out", required=True)
    f.add_argument("--epochs", type=int, default=10)
    f.add_argument("--seed", type=int, default=0)
    f.add_argument("--report", default=None)
    common(f)
    f.set_defaults(fn=cmd_finetune)

    e = sub.add_parser("experiment", help="full multi-trial protocol per seed")
    e.add_argument("--task", required=True)
    e.add_argument("--variant", choices=VARIANTS + ("static",), default="ilsa")
    e.add_argument("--seeds", type=int, nargs="+", required=True)
    e.add_argument("--trials", type=int, default=4)
    e.add_argument("--ckpt", default=None)
    e.add_argument("--data-seed", type=int, default=0)
    e.add_argument("--out", default=None)
    common(e)
    e.set_defaults(fn=cmd_experiment)

    a = sub.add_parser("ablate", help="run ablation variants over shared layouts")
    a.add_argument("--task", required=True)
    a.add_argument("--variants", nargs="+", default=list(VARIANTS))
    a.add_argument("--n", type=int, default=5)
    a.add_argument("--seed", type=int, default=0)
    a.add_argument("--ckpt", default=None)
    a.add_argument("--data-seed", type=int, default=0)
    a.add_argument("--out", default=None)
    a.add_argument("--csv", default=None)
    common(a)
    a.set_defaults(fn=cmd_ablate)

    s = sub.add_parser("serve", help="live teleoperation session endpoint")
    s.add_argument("--task", required=True)
    s.add_argument("--ckpt", required=True)
    s.add_argument("--port", type=int, default=8765)
    s.add_argument("--host", default="127.0.0.1")
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--pretrain", default=None)
    common(s)
    s.set_defaults(fn=cmd_serve)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.fn(args)
    except TrainingError as e:
        print(f"error: {e}", file=sys.stderr)
        return 3
    except (ConfigError, OSError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 2
    except IlsaError as e:
        print(f"error: {e}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
