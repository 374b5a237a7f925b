"""Deterministic policy-gradient agent built on the dense-network engine.

Four networks (train/target actor, train/target critic), a ring replay
buffer, Gaussian exploration noise with multiplicative decay, and one
training iteration per environment step: the critic regresses onto the
soft target r + discount * Q'(s', mu'(s')), the actor ascends the
critic's action gradient, and the targets track the training networks
through soft updates.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import BinaryIO

import numpy as np

from . import neural
from .neural import (
    AdamState,
    BranchedMlp,
    Mlp,
    TrainingDivergenceError,
    adam_step,
    backward,
    backward_branched,
    clone,
    dense_layer,
    forward,
    forward_branched,
    soft_update,
)

_MAGIC = b"DDPG1\n"

# Output layers start near zero so early actions and value estimates are small.
OUTPUT_INIT_BOUND = 3e-3


class BufferNotFullError(RuntimeError):
    """Sampling was requested before the replay buffer filled up."""


@dataclass(frozen=True)
class AgentConfig:
    """DDPG hyperparameters; learning rates follow the reference setup
    (actor 0.001, critic 0.002), the rest are conventional defaults."""

    discount: float = 0.99
    tau: float = 0.005
    lr_actor: float = 0.001
    lr_critic: float = 0.002
    batch_size: int = 64
    capacity: int = 20000
    noise_scale: float = 0.1
    noise_decay: float = 0.9995
    noise_floor: float = 0.01
    hidden: int = 300

    def __post_init__(self) -> None:
        if not 0.0 <= self.discount < 1.0:
            raise ValueError(f"discount must lie in [0, 1), got {self.discount}")
        if not 0.0 < self.tau <= 1.0:
            raise ValueError(f"tau must lie in (0, 1], got {self.tau}")
        if self.batch_size < 1 or self.capacity < 1:
            raise ValueError("batch size and capacity must be positive")
        if self.batch_size > self.capacity:
            raise ValueError(
                f"batch size {self.batch_size} exceeds capacity {self.capacity}"
            )
        if self.lr_actor <= 0 or self.lr_critic <= 0:
            raise ValueError("learning rates must be positive")
        if self.noise_scale < 0 or self.noise_floor < 0:
            raise ValueError("noise scales must be nonnegative")
        if not 0.0 < self.noise_decay <= 1.0:
            raise ValueError(f"noise decay must lie in (0, 1], got {self.noise_decay}")
        if self.hidden < 1:
            raise ValueError("hidden width must be positive")


@dataclass(frozen=True)
class Transition:
    """One experience tuple; the action is the raw pre-projection output."""

    state: np.ndarray
    action: np.ndarray
    reward: float
    next_state: np.ndarray


@dataclass(frozen=True)
class Batch:
    states: np.ndarray  # (n, state_dim)
    actions: np.ndarray  # (n, action_dim)
    rewards: np.ndarray  # (n,)
    next_states: np.ndarray  # (n, state_dim)

    def __len__(self) -> int:
        return self.states.shape[0]


class ReplayBuffer:
    """Fixed-capacity ring store; once full, the newest sample replaces
    the earliest one."""

    def __init__(self, capacity: int, state_dim: int, action_dim: int):
        if capacity < 1:
            raise ValueError("capacity must be positive")
        self.capacity = capacity
        self._states = np.zeros((capacity, state_dim))
        self._actions = np.zeros((capacity, action_dim))
        self._rewards = np.zeros(capacity)
        self._next_states = np.zeros((capacity, state_dim))
        self._cursor = 0
        self._count = 0

    @property
    def count(self) -> int:
        return self._count

    @property
    def is_full(self) -> bool:
        return self._count == self.capacity

    def store(self, t: Transition) -> None:
        if t.state.shape != self._states.shape[1:] or t.action.shape != self._actions.shape[1:]:
            raise ValueError("transition dimensions do not match the buffer")
        if t.next_state.shape != t.state.shape:
            raise ValueError("state and next_state must have the same length")
        i = self._cursor
        self._states[i] = t.state
        self._actions[i] = t.action
        self._rewards[i] = t.reward
        self._next_states[i] = t.next_state
        self._cursor = (i + 1) % self.capacity
        self._count = min(self._count + 1, self.capacity)

    def sample_batch(self, n: int, rng: np.random.Generator) -> Batch:
        """n uniform picks with replacement; requires a full buffer."""
        if not self.is_full:
            raise BufferNotFullError(
                f"replay buffer holds {self._count}/{self.capacity} transitions"
            )
        idx = rng.integers(0, self.capacity, size=n)
        return Batch(
            states=self._states[idx],
            actions=self._actions[idx],
            rewards=self._rewards[idx],
            next_states=self._next_states[idx],
        )


def build_actor(state_dim: int, action_dim: int, hidden: int, rng: np.random.Generator) -> Mlp:
    """Policy network: two batch-normalized tanh hidden layers and a
    tanh-bounded output."""
    return Mlp(
        [
            dense_layer(state_dim, hidden, "tanh", True, rng),
            dense_layer(hidden, hidden, "tanh", True, rng),
            dense_layer(hidden, action_dim, "tanh", False, rng, w_bound=OUTPUT_INIT_BOUND),
        ]
    )


def build_critic(state_dim: int, action_dim: int, hidden: int, rng: np.random.Generator) -> BranchedMlp:
    """Value network: separate state and action input layers stacked
    horizontally, one shared hidden layer, scalar linear output."""
    return BranchedMlp(
        branches=[
            Mlp([dense_layer(state_dim, hidden, "relu", True, rng)]),
            Mlp([dense_layer(action_dim, hidden, "relu", True, rng)]),
        ],
        trunk=Mlp(
            [
                dense_layer(2 * hidden, hidden, "relu", True, rng),
                dense_layer(hidden, 1, "linear", False, rng, w_bound=OUTPUT_INIT_BOUND),
            ]
        ),
    )


class DdpgAgent:
    """Single-writer training agent; exploration noise decays per step."""

    def __init__(
        self,
        state_dim: int,
        action_dim: int,
        cfg: AgentConfig,
        rng: np.random.Generator,
        init_rng: np.random.Generator | None = None,
    ):
        self.state_dim = state_dim
        self.action_dim = action_dim
        self.cfg = cfg
        self._rng = rng
        init = init_rng if init_rng is not None else rng
        self.actor = build_actor(state_dim, action_dim, cfg.hidden, init)
        self.critic = build_critic(state_dim, action_dim, cfg.hidden, init)
        self.target_actor = clone(self.actor)
        self.target_critic = clone(self.critic)
        self.actor_adam = AdamState.for_net(self.actor, cfg.lr_actor)
        self.critic_adam = AdamState.for_net(self.critic, cfg.lr_critic)
        self.buffer = ReplayBuffer(cfg.capacity, state_dim, action_dim)
        self.noise_scale = cfg.noise_scale

    # -- acting ------------------------------------------------------------

    def policy(self, state: np.ndarray) -> np.ndarray:
        """Noise-free action (inference mode)."""
        out, _ = forward(self.actor, state[None, :], mode="inference")
        return out[0]

    def select_action(
        self,
        state: np.ndarray,
        noise_scale: float | None = None,
        rng: np.random.Generator | None = None,
    ) -> np.ndarray:
        """Policy output plus i.i.d. Gaussian exploration on every coordinate."""
        scale = self.noise_scale if noise_scale is None else noise_scale
        gen = self._rng if rng is None else rng
        action = self.policy(state)
        if scale > 0:
            action = action + scale * gen.standard_normal(self.action_dim)
        return action

    def decay_noise(self) -> None:
        self.noise_scale = max(
            self.cfg.noise_floor, self.noise_scale * self.cfg.noise_decay
        )

    # -- training ----------------------------------------------------------

    def store(self, t: Transition) -> None:
        self.buffer.store(t)

    def critic_update(self, batch: Batch) -> float:
        """Regress Q(s, a) onto r + discount * Q'(s', mu'(s')); returns the
        mean squared TD error before the update."""
        n = len(batch)
        next_a, _ = forward(self.target_actor, batch.next_states, mode="inference")
        next_q, _ = forward_branched(
            self.target_critic, [batch.next_states, next_a], mode="inference"
        )
        targets = batch.rewards + self.cfg.discount * next_q[:, 0]
        q, cache = forward_branched(self.critic, [batch.states, batch.actions], mode="train")
        err = q[:, 0] - targets
        loss = float(np.mean(err**2))
        if not np.isfinite(loss):
            raise TrainingDivergenceError(f"critic loss is {loss}")
        grads, _ = backward_branched(self.critic, cache, (2.0 / n) * err[:, None])
        adam_step(self.critic, grads, self.critic_adam)
        return loss

    def actor_update(self, batch: Batch) -> float:
        """Ascend the critic's action gradient through the policy; the
        critic's tensors (running statistics included) are left untouched.
        Returns the mean Q before the update."""
        n = len(batch)
        actions, actor_cache = forward(self.actor, batch.states, mode="train")
        q, critic_cache = forward_branched(
            self.critic, [batch.states, actions], mode="train", update_running=False
        )
        mean_q = float(np.mean(q))
        if not np.isfinite(mean_q):
            raise TrainingDivergenceError(f"policy objective is {mean_q}")
        # Descend on -mean(Q): upstream gradient -1/n per sample.
        _, (_, d_action) = backward_branched(
            self.critic, critic_cache, np.full((n, 1), -1.0 / n)
        )
        actor_grads, _ = backward(self.actor, actor_cache, d_action)
        adam_step(self.actor, actor_grads, self.actor_adam)
        return mean_q

    def sync_targets(self, tau: float | None = None) -> None:
        t = self.cfg.tau if tau is None else tau
        soft_update(self.target_actor, self.actor, t)
        soft_update(self.target_critic, self.critic, t)

    def train_iteration(self, rng: np.random.Generator | None = None) -> tuple[float, float]:
        """One full update: sample, critic step, actor step, target sync."""
        gen = self._rng if rng is None else rng
        batch = self.buffer.sample_batch(self.cfg.batch_size, gen)
        loss = self.critic_update(batch)
        mean_q = self.actor_update(batch)
        self.sync_targets()
        return loss, mean_q

    # -- persistence ---------------------------------------------------------
    #
    # Checkpoint layout: magic, JSON header (dimensions, hyperparameters,
    # noise scale, optimizer step counters, replay cursor metadata), the
    # four networks in neural's format, then the Adam moment tensors for
    # the train actor and train critic.  Replay contents are not saved.

    def save(self, path: str | Path) -> None:
        header = {
            "state_dim": self.state_dim,
            "action_dim": self.action_dim,
            "config": self.cfg.__dict__,
            "noise_scale": self.noise_scale,
            "adam_steps": {"actor": self.actor_adam.step, "critic": self.critic_adam.step},
            "buffer": {"cursor": self.buffer._cursor, "count": self.buffer.count},
        }
        with open(path, "wb") as fh:
            fh.write(_MAGIC)
            fh.write(json.dumps(header).encode() + b"\n")
            for net in (self.actor, self.critic, self.target_actor, self.target_critic):
                neural.write_net(fh, net)
            for state in (self.actor_adam, self.critic_adam):
                _write_adam(fh, state)

    @classmethod
    def load(cls, path: str | Path, rng: np.random.Generator | None = None) -> "DdpgAgent":
        """Restore networks, optimizer state and noise scale. The replay
        buffer starts empty; its saved cursor metadata is informational."""
        gen = rng if rng is not None else np.random.default_rng(0)
        with open(path, "rb") as fh:
            if fh.read(len(_MAGIC)) != _MAGIC:
                raise ValueError(f"{path} is not an agent checkpoint")
            header = json.loads(fh.readline().decode())
            cfg = AgentConfig(**header["config"])
            agent = cls(header["state_dim"], header["action_dim"], cfg, gen)
            agent.actor = neural.read_net(fh)
            agent.critic = neural.read_net(fh)
            agent.target_actor = neural.read_net(fh)
            agent.target_critic = neural.read_net(fh)
            agent.actor_adam = _read_adam(fh, agent.actor, cfg.lr_actor, header["adam_steps"]["actor"])
            agent.critic_adam = _read_adam(fh, agent.critic, cfg.lr_critic, header["adam_steps"]["critic"])
            agent.noise_scale = header["noise_scale"]
        return agent


def _write_adam(fh: BinaryIO, state: AdamState) -> None:
    for moments in (state.m, state.v):
        for layer in moments:
            for key in sorted(layer):
                fh.write(np.ascontiguousarray(layer[key], dtype="<f8").tobytes())


def _read_adam(fh: BinaryIO, net, lr: float, step: int) -> AdamState:
    state = AdamState.for_net(net, lr)
    state.step = step
    for moments in (state.m, state.v):
        for layer in moments:
            for key in sorted(layer):
                n = layer[key].size
                buf = fh.read(8 * n)
                if len(buf) != 8 * n:
                    raise ValueError("truncated checkpoint")
                layer[key] = np.frombuffer(buf, dtype="<f8").reshape(layer[key].shape).astype(float)
    return state
