"""Experiment orchestration: training runs, random baseline, sweeps.

Episodes follow the joint-optimization loop: per episode the channel is
redrawn (or reused, in fixed-channel mode), beams restart from the
identity and phases from uniformly random angles, and each inner step
selects a noisy action, scores it in the environment, stores the
transition, and -- once the replay buffer is full -- runs one critic,
actor and target update.  Per-episode and per-step logs stream to CSV
as they are produced, so aborted runs keep their partial logs.
"""

from __future__ import annotations

import csv
import json
import logging
import time
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from .channel import ChannelRealization, FadingConfig, SystemDims, complex_normal, sample_realization
from .ddpg import AgentConfig, DdpgAgent, Transition
from .noma_env import (
    EnvConfig,
    NetworkAction,
    ProjectionDegenerateError,
    dbm_to_watts,
    encode_action,
    env_step,
    initial_state,
    action_dim,
    state_dim,
)

log = logging.getLogger(__name__)

EPISODE_CSV_HEADER = ["episode", "acc_reward", "mean_sum_rate", "feasible_frac", "noise_scale", "seconds"]
STEP_CSV_HEADER = ["episode", "step", "reward", "sum_rate", "feasible"]
SWEEP_CSV_HEADER = ["axis_value", "ddpg_sum_rate", "random_sum_rate", "ddpg_feasible_frac", "random_feasible_frac"]

CHANNEL_MODES = ("fixed", "varying")


@dataclass(frozen=True)
class RunConfig:
    dims: SystemDims
    fading: FadingConfig
    env: EnvConfig
    agent: AgentConfig
    episodes: int
    steps: int
    channel_mode: str = "varying"
    seed: int = 0
    out_dir: Path | None = None
    eval_realizations: int = 5
    eval_steps: int = 20
    baseline_trials: int = 1000

    def __post_init__(self) -> None:
        if self.episodes < 1 or self.steps < 1:
            raise ValueError("episodes and steps must be at least 1")
        if self.channel_mode not in CHANNEL_MODES:
            raise ValueError(f"channel_mode must be one of {CHANNEL_MODES}")
        if self.env.dims != self.dims:
            raise ValueError("env.dims must match the run dims")
        if self.eval_realizations < 1 or self.eval_steps < 1 or self.baseline_trials < 1:
            raise ValueError("evaluation settings must be at least 1")


@dataclass
class EpisodeLog:
    episode: int
    acc_reward: float
    mean_sum_rate: float
    feasible_frac: float
    noise_scale: float
    seconds: float
    channel_digest: str = ""  # not part of the CSV schema

    def csv_row(self) -> list:
        return [
            self.episode,
            repr(self.acc_reward),
            repr(self.mean_sum_rate),
            repr(self.feasible_frac),
            repr(self.noise_scale),
            repr(self.seconds),
        ]


@dataclass
class TrainResult:
    logs: list[EpisodeLog]
    agent: DdpgAgent
    episode_csv: Path | None = None
    step_csv: Path | None = None
    checkpoint: Path | None = None
    best: dict | None = None


@dataclass(frozen=True)
class BaselineResult:
    mean_sum_rate: float
    feasible_frac: float
    std_error: float
    trials: int


@dataclass(frozen=True)
class EvalResult:
    mean_sum_rate: float
    feasible_frac: float


def _rng_streams(seed: int, names: Sequence[str]) -> dict[str, np.random.Generator]:
    children = np.random.SeedSequence(seed).spawn(len(names))
    return {name: np.random.default_rng(ss) for name, ss in zip(names, children)}


def _training_step(
    agent: DdpgAgent,
    state_vec: np.ndarray,
    real: ChannelRealization,
    env_cfg: EnvConfig,
    retries: int = 100,
):
    """Select a noisy action and score it; degenerate projections are
    resolved by redrawing the exploration noise."""
    for _ in range(retries):
        raw = agent.select_action(state_vec)
        try:
            return raw, env_step(raw, real, env_cfg)
        except ProjectionDegenerateError:
            continue
    raise ProjectionDegenerateError(f"action stayed degenerate after {retries} redraws")


def run_training(
    cfg: RunConfig,
    clock: Callable[[], float] | None = None,
    checkpoint_path: Path | None = None,
) -> TrainResult:
    """Full training run; returns per-episode logs and the trained agent.

    ``clock`` defaults to ``time.perf_counter`` and exists so tests can
    inject a deterministic timer (the seconds column is the only
    non-reproducible quantity in the logs).
    """
    clock = clock or time.perf_counter
    streams = _rng_streams(cfg.seed, ["channel", "agent", "run"])
    sdim, adim = state_dim(cfg.dims), action_dim(cfg.dims)
    # Weight init draws from a dedicated stream so channel sampling stays
    # aligned between fixed and varying modes.
    agent = DdpgAgent(sdim, adim, cfg.agent, streams["run"], init_rng=streams["agent"])

    fixed_real = None
    if cfg.channel_mode == "fixed":
        fixed_real = sample_realization(cfg.dims, cfg.fading, streams["channel"])

    episode_csv = step_csv = None
    ep_writer = st_writer = None
    ep_fh = st_fh = None
    if cfg.out_dir is not None:
        out = Path(cfg.out_dir)
        out.mkdir(parents=True, exist_ok=True)
        episode_csv = out / "episodes.csv"
        step_csv = out / "steps.csv"
        ep_fh = open(episode_csv, "w", newline="", encoding="utf-8")
        st_fh = open(step_csv, "w", newline="", encoding="utf-8")
        ep_writer = csv.writer(ep_fh)
        st_writer = csv.writer(st_fh)
        ep_writer.writerow(EPISODE_CSV_HEADER)
        st_writer.writerow(STEP_CSV_HEADER)

    logs: list[EpisodeLog] = []
    best: dict | None = None
    try:
        for ep in range(1, cfg.episodes + 1):
            t0 = clock()
            real = fixed_real if fixed_real is not None else sample_realization(
                cfg.dims, cfg.fading, streams["channel"]
            )
            state = initial_state(real, cfg.env, streams["run"])
            rewards = np.empty(cfg.steps)
            sum_rates = np.empty(cfg.steps)
            feasibles = np.empty(cfg.steps, dtype=bool)
            for t in range(cfg.steps):
                raw, outcome = _training_step(agent, state.to_vector(), real, cfg.env)
                agent.store(
                    Transition(
                        state=state.to_vector(),
                        action=raw,
                        reward=outcome.reward,
                        next_state=outcome.next_state.to_vector(),
                    )
                )
                if agent.buffer.is_full:
                    agent.train_iteration()
                agent.decay_noise()
                rewards[t] = outcome.reward
                sum_rates[t] = outcome.sum_rate
                feasibles[t] = outcome.feasible
                if outcome.feasible and (best is None or outcome.sum_rate > best["sum_rate"]):
                    best = {
                        "episode": ep,
                        "step": t + 1,
                        "sum_rate": outcome.sum_rate,
                        "action": outcome.next_state.prev_action.tolist(),
                    }
                if st_writer is not None:
                    st_writer.writerow(
                        [ep, t + 1, repr(float(rewards[t])), repr(float(sum_rates[t])), int(feasibles[t])]
                    )
                state = outcome.next_state
            entry = EpisodeLog(
                episode=ep,
                acc_reward=float(np.sum(rewards)),
                mean_sum_rate=float(np.mean(sum_rates)),
                feasible_frac=float(np.mean(feasibles)),
                noise_scale=agent.noise_scale,
                seconds=clock() - t0,
                channel_digest=real.digest(),
            )
            logs.append(entry)
            if ep_writer is not None:
                ep_writer.writerow(entry.csv_row())
            if ep % 10 == 0 or ep == cfg.episodes:
                log.info(
                    "episode %d/%d acc_reward=%.2f mean_sum_rate=%.3f feasible=%.2f",
                    ep, cfg.episodes, entry.acc_reward, entry.mean_sum_rate, entry.feasible_frac,
                )
    finally:
        for fh in (ep_fh, st_fh):
            if fh is not None:
                fh.flush()
                fh.close()

    ckpt = checkpoint_path
    if ckpt is None and cfg.out_dir is not None:
        ckpt = Path(cfg.out_dir) / "agent.ckpt"
    if ckpt is not None:
        agent.save(ckpt)
    if best is not None and cfg.out_dir is not None:
        with open(Path(cfg.out_dir) / "best_action.json", "w", encoding="utf-8") as fh:
            json.dump(best, fh, indent=2)
    return TrainResult(
        logs=logs,
        agent=agent,
        episode_csv=episode_csv,
        step_csv=step_csv,
        checkpoint=ckpt,
        best=best,
    )


def random_raw_action(dims: SystemDims, rng: np.random.Generator) -> np.ndarray:
    """Reference action draw: CN(0,1) beams and uniform unit phases."""
    beams = complex_normal(rng, (dims.K, dims.M))
    phases = np.exp(1j * rng.uniform(0.0, 2.0 * np.pi, size=dims.N))
    return encode_action(NetworkAction(beams=beams, phases=phases))


def run_random_baseline(
    cfg: RunConfig, trials: int, rng: np.random.Generator | None = None
) -> BaselineResult:
    """Mean sum rate of random actions over fresh channel realizations.

    Infeasible trials are counted at their achieved sum rate (excluding
    them would bias the comparison upward); the feasibility fraction is
    reported alongside.
    """
    if trials < 1:
        raise ValueError("trials must be at least 1")
    gen = rng if rng is not None else _rng_streams(cfg.seed, ["baseline"])["baseline"]
    sum_rates = np.empty(trials)
    feasible = np.empty(trials, dtype=bool)
    for i in range(trials):
        real = sample_realization(cfg.dims, cfg.fading, gen)
        raw = random_raw_action(cfg.dims, gen)
        outcome = env_step(raw, real, cfg.env)
        sum_rates[i] = outcome.sum_rate
        feasible[i] = outcome.feasible
    return BaselineResult(
        mean_sum_rate=float(np.mean(sum_rates)),
        feasible_frac=float(np.mean(feasible)),
        std_error=float(np.std(sum_rates, ddof=1) / np.sqrt(trials)) if trials > 1 else 0.0,
        trials=trials,
    )


def evaluate_policy(
    agent: DdpgAgent,
    cfg: RunConfig,
    realizations: int | None = None,
    steps: int | None = None,
    rng: np.random.Generator | None = None,
) -> EvalResult:
    """Noise-free rollouts of the trained policy on fresh channels."""
    realizations = realizations or cfg.eval_realizations
    steps = steps or cfg.eval_steps
    gen = rng if rng is not None else _rng_streams(cfg.seed, ["eval"])["eval"]
    sum_rates = []
    feas = []
    for _ in range(realizations):
        real = sample_realization(cfg.dims, cfg.fading, gen)
        state = initial_state(real, cfg.env, gen)
        for _t in range(steps):
            raw = agent.policy(state.to_vector())
            try:
                outcome = env_step(raw, real, cfg.env)
            except ProjectionDegenerateError:
                # Vanishingly unlikely for a trained net; nudge and retry.
                raw = raw + 1e-9 * gen.standard_normal(raw.shape)
                outcome = env_step(raw, real, cfg.env)
            sum_rates.append(outcome.sum_rate)
            feas.append(outcome.feasible)
            state = outcome.next_state
    return EvalResult(
        mean_sum_rate=float(np.mean(sum_rates)), feasible_frac=float(np.mean(feas))
    )


def run_sweep(
    cfg: RunConfig,
    axis: str,
    values: Sequence[float],
    clock: Callable[[], float] | None = None,
) -> list[dict]:
    """Train and evaluate at each axis value; compares against random.

    ``axis`` is "power" (values in dBm) or "elements" (IRS element
    counts).  Each point trains a fresh agent under the derived config.
    Returns one row dict per value and writes sweep.csv when the config
    has an output directory.
    """
    if axis not in ("power", "elements"):
        raise ValueError(f"axis must be 'power' or 'elements', got {axis!r}")
    if len(values) == 0:
        raise ValueError("sweep needs at least one value")
    rows = []
    for idx, value in enumerate(values):
        point = _sweep_point_config(cfg, axis, value)
        log.info("sweep %s=%s: training", axis, value)
        result = run_training(point, clock=clock)
        ev = evaluate_policy(result.agent, point)
        base = run_random_baseline(point, point.baseline_trials)
        rows.append(
            {
                "axis_value": value,
                "ddpg_sum_rate": ev.mean_sum_rate,
                "random_sum_rate": base.mean_sum_rate,
                "ddpg_feasible_frac": ev.feasible_frac,
                "random_feasible_frac": base.feasible_frac,
            }
        )
    if cfg.out_dir is not None:
        out = Path(cfg.out_dir)
        out.mkdir(parents=True, exist_ok=True)
        with open(out / "sweep.csv", "w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh)
            writer.writerow(SWEEP_CSV_HEADER)
            for row in rows:
                writer.writerow([row[k] if k == "axis_value" else repr(row[k]) for k in SWEEP_CSV_HEADER])
    return rows


def _sweep_point_config(cfg: RunConfig, axis: str, value: float) -> RunConfig:
    if axis == "power":
        env = replace(cfg.env, P_t=dbm_to_watts(float(value)))
        point = replace(cfg, env=env)
    else:
        dims = SystemDims(M=cfg.dims.M, N=int(value), K=cfg.dims.K)
        point = replace(cfg, dims=dims, env=replace(cfg.env, dims=dims))
    if cfg.out_dir is not None:
        point = replace(point, out_dir=Path(cfg.out_dir) / f"{axis}_{value}")
    return point


# ---------------------------------------------------------------------------
# presets


def smoke_config(
    episodes: int = 30,
    steps: int = 50,
    seed: int = 0,
    out_dir: Path | None = None,
    channel_mode: str = "varying",
) -> RunConfig:
    """Desk-scale preset (M=2, N=8, K=2) that trains in well under a
    minute at the defaults.  The replay capacity is sized so the buffer
    fills early in the run (training only starts once it is full)."""
    dims = SystemDims(M=2, N=8, K=2)
    return RunConfig(
        dims=dims,
        fading=FadingConfig(),
        env=EnvConfig(P_t=dbm_to_watts(30.0), dims=dims),
        agent=AgentConfig(capacity=500),
        episodes=episodes,
        steps=steps,
        channel_mode=channel_mode,
        seed=seed,
        out_dir=out_dir,
    )


def headline_config(
    episodes: int = 200,
    steps: int = 100,
    seed: int = 0,
    out_dir: Path | None = None,
    channel_mode: str = "varying",
) -> RunConfig:
    """Reference configuration: M=4 antennas, N=32 IRS elements, K=4
    users, -10 dBm noise.  Replay capacity is kept below the total step
    budget so updates actually run."""
    dims = SystemDims(M=4, N=32, K=4)
    return RunConfig(
        dims=dims,
        fading=FadingConfig(),
        env=EnvConfig(P_t=dbm_to_watts(30.0), dims=dims),
        agent=AgentConfig(capacity=2000),
        episodes=episodes,
        steps=steps,
        channel_mode=channel_mode,
        seed=seed,
        out_dir=out_dir,
    )
