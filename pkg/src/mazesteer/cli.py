"""Command-line entrypoint: train, bench, demo-gmm, serve.

Flags may come from a JSON config document (--config); explicit command-line
values win over the file.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from . import bench as bn
from . import diffusion as df
from . import maze as mz
from . import nn
from . import steering as sg
from . import vae as vb

DEFAULT_BETAS = {"gd": 20.0, "ss": 60.0}
DEFAULT_GRAD_CLIP = 0.15


def _load_maze(env: str) -> mz.MazeMap:
    p = Path(env)
    if p.exists():
        return mz.load_maze(p)
    return mz.load_builtin_maze(env)


def _merge_config(args: argparse.Namespace, parser: argparse.ArgumentParser) -> argparse.Namespace:
    """Fill unset flags from the JSON config file; CLI values take precedence."""
    if not getattr(args, "config", None):
        return args
    doc = json.loads(Path(args.config).read_text())
    sub = next(a for a in parser._actions if isinstance(a, argparse._SubParsersAction))
    cmd_parser = sub.choices[args.command]
    defaults = {a.dest: a.default for a in cmd_parser._actions}
    for key, value in doc.items():
        dest = key.replace("-", "_")
        if hasattr(args, dest) and getattr(args, dest) == defaults.get(dest):
            setattr(args, dest, value)
    return args


def cmd_train(args) -> int:
    maze = _load_maze(args.env)
    goals = mz.builtin_goals(maze.name) if args.ta else None
    demos = mz.generate_demos(
        maze,
        num_steps=args.demo_steps,
        seed=args.demo_seed,
        goals=goals,
        step_size=args.demo_step_size,
        window_stride=args.demo_stride,
        home_cell=mz.BRANCH_CELL if args.ta else None,
    )
    print(f"demos: {len(demos)} windows of {demos.horizon}")
    meta = {
        "dataset": nn.dataset_fingerprint(demos.trajectories),
        "demo_num_steps": args.demo_steps,
        "demo_seed": args.demo_seed,
        "train_steps": args.steps,
        "train_seed": args.seed,
        "batch": args.batch,
        "lr": args.lr,
    }
    if args.policy == "dp":
        policy = df.make_policy(maze, seed=args.seed)
        policy, hist = df.train(
            policy, demos, steps=args.steps, seed=args.seed, batch=args.batch, lr=args.lr
        )
        df.save_policy(args.out, policy, {**meta, "history": hist})
    else:
        policy = vb.make_latent_policy(maze, seed=args.seed)
        policy, hist = vb.train_vae(
            policy, demos, steps=args.steps, seed=args.seed, batch=args.batch, lr=args.lr
        )
        vb.save_latent_policy(args.out, policy, {**meta, "history": hist})
    print(f"saved {args.out}")
    return 0


def method_configs(
    methods: list[str],
    batch: int,
    beta_gd: float,
    beta_ss: float,
    mcmc: int,
    grad_clip: float,
    cutoff: int,
) -> list[sg.GuidanceConfig]:
    out = []
    for m in methods:
        beta = {"gd": beta_gd, "ss": beta_ss}.get(m, 0.0)
        out.append(
            sg.GuidanceConfig(
                method=m,
                beta=beta,
                cutoff_step=cutoff if m in ("gd", "ss") else 0,
                mcmc_steps=mcmc if m == "ss" else 1,
                batch=batch,
                grad_clip=grad_clip,
            )
        )
    return out


def cmd_bench(args) -> int:
    policies: dict = {}
    policy, _ = df.load_policy(args.ckpt)
    policies["dp"] = policy
    if args.ckpt_vae:
        vae, _ = vb.load_latent_policy(args.ckpt_vae)
        policies["vae"] = vae
    maze = _load_maze(args.env) if args.env else mz.load_builtin_maze(policy.map_id)
    goals = mz.builtin_goals(maze.name) if args.ta else None
    trials = bn.gen_trials(
        maze,
        args.trials,
        args.kind,
        seed=args.seed,
        goals=goals,
        cond=mz.BRANCH_STATE if args.ta else None,
    )
    methods = method_configs(
        args.methods.split(","), args.batch, args.beta_gd, args.beta_ss,
        args.mcmc, args.grad_clip, args.cutoff_step,
    )
    report = bn.run_benchmark(
        policies,
        methods,
        trials,
        maze,
        goals=goals,
        config_echo={
            "ckpt": str(args.ckpt),
            "ckpt_vae": str(args.ckpt_vae) if args.ckpt_vae else None,
            "maze": maze.name,
            "kind": args.kind,
            "ta": bool(args.ta),
            "trials": args.trials,
            "batch": args.batch,
            "seed": args.seed,
            "methods": args.methods,
            "beta_gd": args.beta_gd,
            "beta_ss": args.beta_ss,
            "mcmc": args.mcmc,
            "grad_clip": args.grad_clip,
            "cutoff_step": args.cutoff_step,
        },
    )
    out = Path(args.out)
    out.write_text(report.to_json())
    out.with_suffix(".csv").write_text(report.to_csv())
    out.with_suffix(".txt").write_text(report.to_text() + "\n")
    print(report.to_text())
    print(f"wrote {out}, {out.with_suffix('.csv')}, {out.with_suffix('.txt')}")
    return 0


def cmd_demo_gmm(args) -> int:
    result = bn.run_gmm_demo(
        beta_gd=args.beta_gd,
        beta_ss=args.beta_ss,
        mcmc_steps=args.mcmc,
        seeds=args.seeds,
        batch=args.batch,
        grad_clip=args.grad_clip,
    )
    Path(args.out).write_text(json.dumps(result, indent=2, sort_keys=True))
    m = result["methods"]
    print(
        f"product log-density: ss {m['ss']['product_logdensity_mean']:.3f} "
        f"vs gd {m['gd']['product_logdensity_mean']:.3f} "
        f"(separation {result['separation']:.3f})"
    )
    print(
        f"ss at nearest mode: {m['ss']['fraction_at_nearest_mode']:.3f}; "
        f"gd in low-density region: {m['gd']['fraction_low_product_density']:.3f}"
    )
    print(f"wrote {args.out}")
    return 0


def cmd_serve(args) -> int:
    from . import service

    service.serve(args.ckpt, host=args.host, port=args.port)
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="mazesteer")
    sub = p.add_subparsers(dest="command", required=True)

    t = sub.add_parser("train", help="train a policy on maze demonstrations")
    t.add_argument("--config", default=None)
    t.add_argument("--env", default="corridors", help="maze asset path or builtin name")
    t.add_argument("--policy", choices=("dp", "vae"), default="dp")
    t.add_argument("--steps", type=int, default=50_000)
    t.add_argument("--seed", type=int, default=0)
    t.add_argument("--out", required=True)
    t.add_argument("--batch", type=int, default=256)
    t.add_argument("--lr", type=float, default=1e-3)
    t.add_argument("--demo-steps", type=int, default=250_000)
    t.add_argument("--demo-seed", type=int, default=0)
    t.add_argument("--demo-step-size", type=float, default=None)
    t.add_argument("--demo-stride", type=int, default=None)
    t.add_argument("--ta", action="store_true", help="multi-goal demos (threegoals maze)")
    t.set_defaults(func=cmd_train)

    b = sub.add_parser("bench", help="run the steering benchmark")
    b.add_argument("--config", default=None)
    b.add_argument("--ckpt", required=True)
    b.add_argument("--ckpt-vae", default=None)
    b.add_argument("--env", default=None)
    b.add_argument("--methods", default="rs,pr,op,bi,gd,ss")
    b.add_argument("--kind", choices=("sketch", "point", "nudge"), default="sketch")
    b.add_argument("--ta", action="store_true", help="multi-goal task-alignment trials")
    b.add_argument("--trials", type=int, default=100)
    b.add_argument("--batch", type=int, default=32)
    b.add_argument("--seed", type=int, default=0)
    b.add_argument("--beta-gd", type=float, default=DEFAULT_BETAS["gd"])
    b.add_argument("--beta-ss", type=float, default=DEFAULT_BETAS["ss"])
    b.add_argument("--mcmc", type=int, default=4)
    b.add_argument("--grad-clip", type=float, default=DEFAULT_GRAD_CLIP)
    b.add_argument("--cutoff-step", type=int, default=0)
    b.add_argument("--out", default="report.json")
    b.set_defaults(func=cmd_bench)

    g = sub.add_parser("demo-gmm", help="sum-vs-product composition demo")
    g.add_argument("--config", default=None)
    g.add_argument("--beta-gd", type=float, default=20.0)
    g.add_argument("--beta-ss", type=float, default=60.0)
    g.add_argument("--mcmc", type=int, default=4)
    g.add_argument("--seeds", type=int, default=20)
    g.add_argument("--batch", type=int, default=256)
    g.add_argument("--grad-clip", type=float, default=bn.TOY_GRAD_CLIP)
    g.add_argument("--out", default="gmm.json")
    g.set_defaults(func=cmd_demo_gmm)

    s = sub.add_parser("serve", help="run the live steering service")
    s.add_argument("--config", default=None)
    s.add_argument("--ckpt", required=True)
    s.add_argument("--host", default="127.0.0.1")
    s.add_argument("--port", type=int, default=8787)
    s.set_defaults(func=cmd_serve)
    return p


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    args = _merge_config(args, parser)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
