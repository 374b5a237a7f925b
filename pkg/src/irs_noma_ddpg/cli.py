"""Command-line entry point: train, baseline, sweep and eval subcommands.

Every run-configuration field is reachable through a flag; a YAML config
file can supply the same fields, with explicit flags taking precedence.
Exits 0 on success, 2 on configuration errors, 3 on training divergence.
"""

from __future__ import annotations

import argparse
import logging
import sys
from dataclasses import replace
from pathlib import Path

import yaml

from .channel import FadingConfig, SystemDims
from .ddpg import AgentConfig, DdpgAgent
from .harness import (
    RunConfig,
    evaluate_policy,
    headline_config,
    run_random_baseline,
    run_sweep,
    run_training,
    smoke_config,
)
from .neural import TrainingDivergenceError
from .noma_env import EnvConfig, dbm_to_watts

log = logging.getLogger(__name__)

_PRESETS = {"smoke": smoke_config, "headline": headline_config}


def _add_config_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", type=Path, help="YAML file with run-config fields")
    p.add_argument("--preset", choices=sorted(_PRESETS), default="smoke")
    p.add_argument("--seed", type=int)
    p.add_argument("--out-dir", type=Path)
    # dimensions
    p.add_argument("--antennas", "-M", type=int, dest="M")
    p.add_argument("--elements", "-N", type=int, dest="N")
    p.add_argument("--users", "-K", type=int, dest="K")
    # fading
    p.add_argument("--alpha", type=float, help="path-loss exponent")
    p.add_argument("--rician-factor", type=float)
    p.add_argument("--bs-irs-distance", type=float)
    p.add_argument("--range-dd", type=float, nargs=2, metavar=("LO", "HI"))
    p.add_argument("--range-dr", type=float, nargs=2, metavar=("LO", "HI"))
    # environment
    p.add_argument("--pt-dbm", type=float, help="total transmit power in dBm")
    p.add_argument("--pt-watts", type=float, help="total transmit power in watts")
    p.add_argument("--noise-dbm", type=float, help="noise power in dBm")
    p.add_argument("--target-rate", type=float, help="SIC target rate R_t in bits/s/Hz")
    # agent
    p.add_argument("--discount", type=float)
    p.add_argument("--tau", type=float)
    p.add_argument("--lr-actor", type=float)
    p.add_argument("--lr-critic", type=float)
    p.add_argument("--batch-size", type=int)
    p.add_argument("--capacity", type=int)
    p.add_argument("--noise-scale", type=float)
    p.add_argument("--noise-decay", type=float)
    p.add_argument("--noise-floor", type=float)
    p.add_argument("--hidden", type=int)
    # run shape
    p.add_argument("--episodes", "-I", type=int)
    p.add_argument("--steps", "-T", type=int)
    p.add_argument("--mode", choices=["fixed", "varying"], dest="channel_mode")
    p.add_argument("--eval-realizations", type=int)
    p.add_argument("--eval-steps", type=int)
    p.add_argument("--baseline-trials", type=int)


def _config_from_file(path: Path) -> dict:
    with open(path, "r", encoding="utf-8") as fh:
        data = yaml.safe_load(fh) or {}
    if not isinstance(data, dict):
        raise ValueError(f"config file {path} must contain a mapping")
    return data


def build_run_config(args: argparse.Namespace) -> RunConfig:
    """Preset -> config file -> explicit flags, later sources winning."""
    cfg = _PRESETS[args.preset]()
    file_vals = _config_from_file(args.config) if args.config else {}

    def pick(flag, file_key, fallback):
        val = getattr(args, flag, None)
        if val is not None:
            return val
        return file_vals.get(file_key, fallback)

    dims = SystemDims(
        M=int(pick("M", "antennas", cfg.dims.M)),
        N=int(pick("N", "elements", cfg.dims.N)),
        K=int(pick("K", "users", cfg.dims.K)),
    )
    fading = FadingConfig(
        alpha=float(pick("alpha", "alpha", cfg.fading.alpha)),
        rician_factor=float(pick("rician_factor", "rician_factor", cfg.fading.rician_factor)),
        d_bs_irs=float(pick("bs_irs_distance", "bs_irs_distance", cfg.fading.d_bs_irs)),
        range_dd=tuple(pick("range_dd", "range_dd", cfg.fading.range_dd)),
        range_dr=tuple(pick("range_dr", "range_dr", cfg.fading.range_dr)),
    )
    p_t = cfg.env.P_t
    if "pt_dbm" in file_vals:
        p_t = dbm_to_watts(float(file_vals["pt_dbm"]))
    if "pt_watts" in file_vals:
        p_t = float(file_vals["pt_watts"])
    if args.pt_dbm is not None:
        p_t = dbm_to_watts(args.pt_dbm)
    if args.pt_watts is not None:
        p_t = args.pt_watts
    noise = cfg.env.noise_power
    if "noise_dbm" in file_vals:
        noise = dbm_to_watts(float(file_vals["noise_dbm"]))
    if args.noise_dbm is not None:
        noise = dbm_to_watts(args.noise_dbm)
    env = EnvConfig(
        P_t=p_t,
        dims=dims,
        noise_power=noise,
        R_t=float(pick("target_rate", "target_rate", cfg.env.R_t)),
    )
    agent = AgentConfig(
        discount=float(pick("discount", "discount", cfg.agent.discount)),
        tau=float(pick("tau", "tau", cfg.agent.tau)),
        lr_actor=float(pick("lr_actor", "lr_actor", cfg.agent.lr_actor)),
        lr_critic=float(pick("lr_critic", "lr_critic", cfg.agent.lr_critic)),
        batch_size=int(pick("batch_size", "batch_size", cfg.agent.batch_size)),
        capacity=int(pick("capacity", "capacity", cfg.agent.capacity)),
        noise_scale=float(pick("noise_scale", "noise_scale", cfg.agent.noise_scale)),
        noise_decay=float(pick("noise_decay", "noise_decay", cfg.agent.noise_decay)),
        noise_floor=float(pick("noise_floor", "noise_floor", cfg.agent.noise_floor)),
        hidden=int(pick("hidden", "hidden", cfg.agent.hidden)),
    )
    out_dir = pick("out_dir", "out_dir", cfg.out_dir)
    return RunConfig(
        dims=dims,
        fading=fading,
        env=env,
        agent=agent,
        episodes=int(pick("episodes", "episodes", cfg.episodes)),
        steps=int(pick("steps", "steps", cfg.steps)),
        channel_mode=pick("channel_mode", "channel_mode", cfg.channel_mode),
        seed=int(pick("seed", "seed", cfg.seed)),
        out_dir=Path(out_dir) if out_dir is not None else None,
        eval_realizations=int(pick("eval_realizations", "eval_realizations", cfg.eval_realizations)),
        eval_steps=int(pick("eval_steps", "eval_steps", cfg.eval_steps)),
        baseline_trials=int(pick("baseline_trials", "baseline_trials", cfg.baseline_trials)),
    )


def main(argv: list[str] | None = None) -> int:
    parser = argparse.ArgumentParser(
        prog="irs-noma-ddpg",
        description="Joint beamforming / IRS phase-shift optimization experiments",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_train = sub.add_parser("train", help="run a training experiment")
    _add_config_flags(p_train)
    p_train.add_argument("--checkpoint", type=Path, help="where to save the trained agent")

    p_base = sub.add_parser("baseline", help="random beamforming / phase baseline")
    _add_config_flags(p_base)
    p_base.add_argument("--trials", type=int, default=1000)

    p_sweep = sub.add_parser("sweep", help="train and compare across an axis")
    _add_config_flags(p_sweep)
    p_sweep.add_argument("--axis", choices=["power", "elements"], required=True)
    p_sweep.add_argument("--values", type=float, nargs="+", required=True)

    p_eval = sub.add_parser("eval", help="evaluate a saved agent checkpoint")
    _add_config_flags(p_eval)
    p_eval.add_argument("--checkpoint", type=Path, required=True)

    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO, format="%(asctime)s %(levelname)s %(message)s")

    try:
        cfg = build_run_config(args)
        if args.command == "train":
            result = run_training(cfg, checkpoint_path=args.checkpoint)
            last = result.logs[-1]
            print(
                f"trained {cfg.episodes} episodes: final acc_reward={last.acc_reward:.3f} "
                f"mean_sum_rate={last.mean_sum_rate:.3f} feasible_frac={last.feasible_frac:.2f}"
            )
            if result.episode_csv:
                print(f"episode log: {result.episode_csv}")
                print(f"step log: {result.step_csv}")
            if result.checkpoint:
                print(f"checkpoint: {result.checkpoint}")
        elif args.command == "baseline":
            res = run_random_baseline(cfg, args.trials)
            print(
                f"random baseline over {res.trials} trials: "
                f"mean_sum_rate={res.mean_sum_rate:.4f} +- {res.std_error:.4f}, "
                f"feasible_frac={res.feasible_frac:.3f}"
            )
        elif args.command == "sweep":
            values = [int(v) if args.axis == "elements" else v for v in args.values]
            rows = run_sweep(cfg, args.axis, values)
            for row in rows:
                print(
                    f"{args.axis}={row['axis_value']}: ddpg={row['ddpg_sum_rate']:.4f} "
                    f"random={row['random_sum_rate']:.4f}"
                )
            if cfg.out_dir is not None:
                print(f"sweep table: {Path(cfg.out_dir) / 'sweep.csv'}")
        elif args.command == "eval":
            agent = DdpgAgent.load(args.checkpoint)
            res = evaluate_policy(agent, cfg)
            print(
                f"policy eval over {cfg.eval_realizations} realizations x "
                f"{cfg.eval_steps} steps: mean_sum_rate={res.mean_sum_rate:.4f}, "
                f"feasible_frac={res.feasible_frac:.3f}"
            )
    except TrainingDivergenceError as exc:
        log.error("training diverged: %s", exc)
        return 3
    except (ValueError, OSError) as exc:
        log.error("%s", exc)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
