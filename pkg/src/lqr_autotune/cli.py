"""Command-line harness: tune / validate / simulate.

Every command is reproducible from its ``--seed``.  Artifacts go to
``--output-dir``, falling back to the LQR_AUTOTUNE_OUT environment
variable and then to ./runs.
"""

import argparse
import csv
import json
import os
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from .artifacts import write_run_artifact
from .lqr import ControllerGain
from .plant import EpisodeConfig, SafetyLimits, run_episode, write_trajectory_csv
from .presets import PRESET_NAMES, make_config
from .tuner import OutOfDomain, run_tuning, synthesize_gain, validate_controller

EXIT_OK = 0
EXIT_ABORTED = 1
EXIT_USAGE = 2

# config-file keys routed into EpisodeConfig / SafetyLimits / TunerConfig
_EPISODE_KEYS = ("horizon_s", "burn_in_s", "noise_psi_std", "noise_psi_dot_std",
                 "psi0", "psi0_range")
_LIMIT_KEYS = ("s_max", "u_max", "psi_max")
_TUNER_KEYS = ("fz", "init_corner_evals", "n_representers", "n_candidates",
               "n_mc_samples", "quadrature_order", "fit_restarts")


class ConfigError(Exception):
    pass


def _default_outdir() -> str:
    return os.environ.get("LQR_AUTOTUNE_OUT", "runs")


def _load_config_file(path) -> dict:
    try:
        with open(path) as fh:
            data = json.load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read config file: {exc}")
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config file is not valid JSON: {exc}")
    if not isinstance(data, dict):
        raise ConfigError("config file must hold a JSON object")
    known = {"preset", "iterations", "seed", "j_unstable", *_EPISODE_KEYS,
             *_LIMIT_KEYS, *_TUNER_KEYS}
    unknown = set(data) - known
    if unknown:
        raise ConfigError(f"unknown config keys: {sorted(unknown)}")
    return data


def _build_tuner_config(args, file_cfg: dict):
    preset = args.preset or file_cfg.get("preset")
    if preset is None:
        raise ConfigError("a preset is required (--preset or config file)")
    if preset not in PRESET_NAMES:
        raise ConfigError(f"unknown preset {preset!r}; choose from {PRESET_NAMES}")
    iterations = args.iterations if args.iterations is not None \
        else file_cfg.get("iterations", 20)
    seed = args.seed if args.seed is not None else file_cfg.get("seed", 0)

    episode_kw = {k: file_cfg[k] for k in _EPISODE_KEYS if k in file_cfg}
    for k in _EPISODE_KEYS:
        flag = getattr(args, k, None)
        if flag is not None:
            episode_kw[k] = flag
    if "j_unstable" in file_cfg:
        episode_kw["j_unstable"] = file_cfg["j_unstable"]
    episode = EpisodeConfig(**episode_kw) if episode_kw else None

    limit_kw = {k: file_cfg[k] for k in _LIMIT_KEYS if k in file_cfg}
    limits = SafetyLimits(**limit_kw) if limit_kw else None

    overrides = {k: file_cfg[k] for k in _TUNER_KEYS if k in file_cfg}
    for k in _TUNER_KEYS:
        flag = getattr(args, k, None)
        if flag is not None:
            overrides[k] = flag
    try:
        config = make_config(preset, n_iterations=int(iterations),
                             master_seed=int(seed), episode=episode,
                             limits=limits, **overrides)
    except (ValueError, OutOfDomain) as exc:
        raise ConfigError(str(exc))
    # config files may pin j_unstable away from the preset default
    if "j_unstable" in file_cfg:
        config = replace(config, episode=replace(config.episode,
                                                 j_unstable=float(file_cfg["j_unstable"])))
    return preset, config


def _parse_theta(text: str) -> np.ndarray:
    try:
        return np.array([float(v) for v in text.split(",")])
    except ValueError:
        raise ConfigError(f"cannot parse parameter vector {text!r}")


def cmd_tune(args) -> int:
    file_cfg = _load_config_file(args.config) if args.config else {}
    preset, config = _build_tuner_config(args, file_cfg)
    outdir = Path(args.output_dir) / f"{preset}_seed{config.master_seed}" \
        if args.run_name is None else Path(args.output_dir) / args.run_name

    sink = None
    if args.save_trajectories:
        traj_dir = outdir / "trajectories"
        traj_dir.mkdir(parents=True, exist_ok=True)
        counter = {"i": 0}

        def sink(theta, episode_result):
            path = traj_dir / f"episode_{counter['i']:03d}.csv"
            write_trajectory_csv(episode_result.trajectory, path,
                                 downsample=args.traj_downsample)
            counter["i"] += 1

    def report(record):
        line = (f"eval {record.index:3d}  theta={_fmt_vec(record.theta)}  "
                f"j_hat={record.j_hat:.6f}  stable={'true' if record.stable else 'false'}  "
                f"bg={_fmt_vec(record.best_guess)}  bg_mean={record.best_guess_mean:.6f}")
        if args.wall_times:
            line += f"  wall_ms={record.wall_ms:.1f}"
        print(line)

    result = run_tuning(config, on_iteration=report, trajectory_sink=sink,
                        collect_trace=args.save_trace)
    write_run_artifact(outdir, config, result, wall_times=args.wall_times)
    print(f"best guess: {_fmt_vec(result.best_guess)}")
    print(f"artifact: {outdir}")
    if result.aborted:
        print("run aborted after repeated surrogate failures", file=sys.stderr)
        return EXIT_ABORTED
    return EXIT_OK


def cmd_validate(args) -> int:
    file_cfg = _load_config_file(args.config) if args.config else {}
    preset, config = _build_tuner_config(args, file_cfg)
    theta = _parse_theta(args.theta)
    if not config.design_map.contains(theta):
        raise ConfigError(f"theta {theta.tolist()} outside the {preset} domain")
    result = validate_controller(theta, config, n_episodes=args.episodes)
    print(f"theta={_fmt_vec(theta)}  mean={result.mean:.6f}  std={result.std:.6f}  "
          f"stable={result.n_stable}/{result.n_episodes}")
    outdir = Path(args.output_dir)
    outdir.mkdir(parents=True, exist_ok=True)
    out = outdir / args.csv_name
    with open(out, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["episode", "j_hat", "stable"])
        for i, (cost, stable) in enumerate(zip(result.costs, result.stables)):
            writer.writerow([i, repr(float(cost)), "true" if stable else "false"])
        writer.writerow(["mean", repr(result.mean), ""])
        writer.writerow(["std", repr(result.std), ""])
    print(f"wrote {out}")
    return EXIT_OK


def cmd_simulate(args) -> int:
    file_cfg = _load_config_file(args.config) if args.config else {}
    preset, config = _build_tuner_config(args, file_cfg)
    if (args.theta is None) == (args.gain is None):
        raise ConfigError("exactly one of --theta or --gain is required")
    if args.theta is not None:
        theta = _parse_theta(args.theta)
        if not config.design_map.contains(theta):
            raise ConfigError(f"theta {theta.tolist()} outside the {preset} domain")
        gain = synthesize_gain(theta, config)
    elif args.gain == "zero":
        gain = ControllerGain(f=np.zeros((1, 4)), fz=0.0)
    else:
        f = _parse_theta(args.gain)
        if f.shape != (4,):
            raise ConfigError(f"--gain needs 4 entries for the 4-state plant, got {len(f)}")
        gain = ControllerGain(f=f[None, :], fz=args.fz if args.fz is not None else config.fz)

    episode = replace(config.episode, horizon_s=args.duration, burn_in_s=0.0)
    result = run_episode(gain, config.plant, episode, config.perf, config.limits,
                         rng_seed=config.master_seed)
    outdir = Path(args.output_dir)
    outdir.mkdir(parents=True, exist_ok=True)
    out = outdir / args.out
    write_trajectory_csv(result.trajectory, out, downsample=args.traj_downsample)
    status = "stable" if result.cost.stable else \
        f"stopped at step {result.cost.failure_step} ({result.cost.violation})"
    print(f"simulated {result.cost.steps_run} steps: {status}")
    print(f"wrote {out}")
    return EXIT_OK


def _fmt_vec(v) -> str:
    return "[" + ",".join(f"{float(x):.6g}" for x in np.atleast_1d(v)) + "]"


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="lqr-autotune",
        description="Automatic LQR tuning on a simulated pole balancer")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--preset", choices=PRESET_NAMES, help="experiment preset")
        p.add_argument("--config", help="JSON config file (flags override it)")
        p.add_argument("--seed", type=int, help="master seed (default 0)")
        p.add_argument("--output-dir", default=_default_outdir(),
                       help="artifact directory (default $LQR_AUTOTUNE_OUT or ./runs)")
        p.add_argument("--iterations", type=int, help="tuning iterations (default 20)")
        p.add_argument("--horizon-s", dest="horizon_s", type=float)
        p.add_argument("--burn-in-s", dest="burn_in_s", type=float)
        p.add_argument("--noise-psi-std", dest="noise_psi_std", type=float)
        p.add_argument("--noise-psi-dot-std", dest="noise_psi_dot_std", type=float)
        p.add_argument("--n-representers", dest="n_representers", type=int)
        p.add_argument("--n-candidates", dest="n_candidates", type=int)
        p.add_argument("--n-mc-samples", dest="n_mc_samples", type=int)

    tune = sub.add_parser("tune", help="run the automatic tuning loop")
    common(tune)
    tune.add_argument("--run-name", help="artifact subdirectory name")
    tune.add_argument("--save-trajectories", action="store_true")
    tune.add_argument("--save-trace", action="store_true",
                      help="dump per-iteration acquisition traces")
    tune.add_argument("--wall-times", action="store_true",
                      help="record measured wall times (breaks byte-reproducibility)")
    tune.add_argument("--traj-downsample", type=int, default=10)
    tune.set_defaults(func=cmd_tune)

    val = sub.add_parser("validate", help="evaluate one controller repeatedly")
    common(val)
    val.add_argument("--theta", required=True, help="comma-separated parameters")
    val.add_argument("--episodes", type=int, default=5)
    val.add_argument("--csv-name", default="validation.csv")
    val.set_defaults(func=cmd_validate)

    sim = sub.add_parser("simulate", help="run and export one episode")
    common(sim)
    sim.add_argument("--theta", help="comma-separated parameters")
    sim.add_argument("--gain", help="explicit gain 'f1,f2,f3,f4' or 'zero'")
    sim.add_argument("--fz", type=float, help="integrator gain for --gain")
    sim.add_argument("--duration", type=float, default=120.0, help="seconds")
    sim.add_argument("--out", default="trajectory.csv")
    sim.add_argument("--traj-downsample", type=int, default=1)
    sim.set_defaults(func=cmd_simulate)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
