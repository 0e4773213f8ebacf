"""A small steering benchmark run through the library API.

The command-line equivalent (full scale, with reports written to disk):

    mazesteer bench --ckpt checkpoints/dp_corridors.ckpt \
        --ckpt-vae checkpoints/vae_corridors.ckpt \
        --methods rs,pr,op,bi,gd,ss --trials 100 --batch 32 --seed 0 \
        --out report.json
"""

from pathlib import Path

from mazesteer import bench as bn
from mazesteer import diffusion as df
from mazesteer import maze as mz
from mazesteer.cli import method_configs

corridors = mz.load_builtin_maze("corridors")
ckpt = Path(__file__).resolve().parents[1] / "checkpoints" / "dp_corridors.ckpt"
if not ckpt.exists():
    raise SystemExit("run scripts/build_checkpoints.py first (or `mazesteer train`)")
policy, _ = df.load_policy(ckpt)

trials = bn.gen_trials(corridors, num=10, kind="sketch", seed=0)
print(f"{len(trials)} sketch trials; "
      f"{bn.sketch_wall_fraction(trials, corridors):.0%} of sketches clip a wall")

methods = method_configs(
    ["rs", "pr", "op", "bi", "gd", "ss"],
    batch=32, beta_gd=20.0, beta_ss=60.0, mcmc=4, grad_clip=0.15, cutoff=0,
)
report = bn.run_benchmark(
    {"dp": policy}, methods, trials, corridors, config_echo={"demo": True}
)
print()
print(report.to_text())

# identical config + seeds reproduce the identical report, byte for byte
again = bn.run_benchmark(
    {"dp": policy}, methods, trials, corridors, config_echo={"demo": True}
)
print("\nbyte-identical on rerun:", report.to_json() == again.to_json())
