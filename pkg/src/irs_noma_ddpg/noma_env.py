"""NOMA downlink environment: SIC decoding order, rates, and reward.

Users are decoded in ascending order of composite channel gain.  A raw
actor output is projected onto the feasible set (total transmit power
pinned to P_t, unit-modulus phase coefficients) before evaluation; the
reward is the sum rate when every SIC rate constraint holds and a
negative constraint deficit otherwise.

All user indices and decoding-order positions are 0-based.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .channel import ChannelRealization, SystemDims, composite_all


class ProjectionDegenerateError(ValueError):
    """Raw action cannot be projected (all-zero beams or a zero phase)."""


def dbm_to_watts(dbm: float) -> float:
    return 10.0 ** ((dbm - 30.0) / 10.0)


def watts_to_dbm(watts: float) -> float:
    return 10.0 * np.log10(watts) + 30.0


@dataclass(frozen=True)
class EnvConfig:
    """Transmit power budget P_t, noise power and SIC target rate.

    Powers are in watts (default noise is -10 dBm), the target rate in
    bits/s/Hz.
    """

    P_t: float
    dims: SystemDims
    noise_power: float = dbm_to_watts(-10.0)
    R_t: float = 0.5

    def __post_init__(self) -> None:
        if self.P_t <= 0:
            raise ValueError(f"transmit power must be positive, got {self.P_t}")
        if self.noise_power <= 0:
            raise ValueError(f"noise power must be positive, got {self.noise_power}")
        if self.R_t < 0:
            raise ValueError(f"target rate must be nonnegative, got {self.R_t}")


@dataclass(frozen=True)
class NetworkAction:
    """K beamforming vectors (rows of ``beams``) plus N phase coefficients."""

    beams: np.ndarray  # (K, M) complex
    phases: np.ndarray  # (N,) complex

    def beam_powers(self) -> np.ndarray:
        return np.sum(np.abs(self.beams) ** 2, axis=1)

    def total_power(self) -> float:
        return float(np.sum(np.abs(self.beams) ** 2))


@dataclass(frozen=True)
class EnvState:
    """Observation fed to the agent: previous SINRs, action and beam powers."""

    prev_sinr: np.ndarray  # (K,) linear SINR
    prev_action: np.ndarray  # (2MK + 2N,) flattened real encoding
    prev_beam_power: np.ndarray  # (K,) watts

    def to_vector(self) -> np.ndarray:
        return np.concatenate([self.prev_sinr, self.prev_action, self.prev_beam_power])


def action_dim(dims: SystemDims) -> int:
    return 2 * dims.M * dims.K + 2 * dims.N


def state_dim(dims: SystemDims) -> int:
    return 2 * dims.K + action_dim(dims)


@dataclass(frozen=True)
class StepOutcome:
    reward: float
    sum_rate: float
    feasible: bool
    rates: np.ndarray  # (K,) per-user rates under the step's decoding order
    decoding_order: np.ndarray  # permutation of {0..K-1}, weakest composite first
    next_state: EnvState


def decoding_order(real: ChannelRealization, phases: np.ndarray) -> np.ndarray:
    """Users sorted by ascending composite channel gain, ties by index."""
    H = composite_all(real, phases)
    gains = np.sum(np.abs(H) ** 2, axis=1)
    return np.argsort(gains, kind="stable")


def interference_set(order: np.ndarray, position: int) -> set[int]:
    """Users decoded after ``position`` (their signals stay uncancelled)."""
    if not 0 <= position < len(order):
        raise ValueError(f"position {position} out of range for {len(order)} users")
    return {int(u) for u in order[position + 1 :]}


def _interference_users(order: np.ndarray, user: int) -> np.ndarray:
    """Interference set of ``user`` given its own position in the order."""
    pos = int(np.nonzero(order == user)[0][0])
    return order[pos + 1 :]


def _sinr(H: np.ndarray, beams: np.ndarray, kappa: np.ndarray, i: int, j: int, noise: float) -> float:
    """SINR of user i's signal observed at user j with interference set kappa."""
    signal = np.abs(H[j] @ beams[i]) ** 2
    interference = sum(np.abs(H[j] @ beams[k]) ** 2 for k in kappa)
    return float(signal / (interference + noise))


def sinr_observed(
    i: int,
    j: int,
    action: NetworkAction,
    real: ChannelRealization,
    order: np.ndarray,
    noise_power: float,
) -> float:
    """SINR of user i's signal when user j decodes it.

    Only pairs where i precedes or equals j in the decoding order are
    meaningful for SIC; i == j gives user i's own decoding SINR.
    """
    H = composite_all(real, action.phases)
    kappa = _interference_users(order, i)
    return _sinr(H, action.beams, kappa, i, j, noise_power)


def rate(sinr: float) -> float:
    """Spectral efficiency log2(1 + sinr) in bits/s/Hz."""
    if sinr < 0:
        raise ValueError(f"SINR must be nonnegative, got {sinr}")
    return float(np.log2(1.0 + sinr))


def project_action(raw: NetworkAction, P_t: float) -> NetworkAction:
    """Map a raw action onto the constraint set.

    Beams are rescaled by sqrt(P_t / total raw power), which preserves
    each beam's direction and the per-user power ratios while pinning
    the total transmit power to P_t.  Each phase coefficient is divided
    by its modulus.
    """
    total = raw.total_power()
    if total <= 0.0:
        raise ProjectionDegenerateError("all-zero beamforming vectors cannot be rescaled")
    moduli = np.abs(raw.phases)
    if np.any(moduli == 0.0):
        raise ProjectionDegenerateError("zero phase coefficient cannot be normalized")
    return NetworkAction(
        beams=raw.beams * np.sqrt(P_t / total),
        phases=raw.phases / moduli,
    )


def _rates_by_pair(
    H: np.ndarray, beams: np.ndarray, order: np.ndarray, noise: float
) -> tuple[np.ndarray, np.ndarray, dict[tuple[int, int], float]]:
    """Own SINRs, own rates R_i, and cross rates R_ij for j in kappa_i."""
    K = len(order)
    own_sinr = np.empty(K)
    own = np.empty(K)
    cross: dict[tuple[int, int], float] = {}
    for pos in range(K):
        i = int(order[pos])
        kappa = order[pos + 1 :]
        own_sinr[i] = _sinr(H, beams, kappa, i, i, noise)
        own[i] = rate(own_sinr[i])
        for j in kappa:
            cross[(i, int(j))] = rate(_sinr(H, beams, kappa, i, int(j), noise))
    return own_sinr, own, cross


def _feasibility(
    own: np.ndarray, cross: dict[tuple[int, int], float], R_t: float
) -> tuple[bool, float]:
    """SIC feasibility and the cross-pair constraint deficit."""
    feasible = bool(np.all(own >= R_t))
    deficit = 0.0
    for (i, _j), r_ij in cross.items():
        margin = min(r_ij, own[i]) - R_t
        if margin < 0:
            feasible = False
            deficit += margin
    return feasible, deficit


def check_sic_feasibility(
    action: NetworkAction,
    real: ChannelRealization,
    order: np.ndarray,
    cfg: EnvConfig,
) -> tuple[bool, float]:
    """Whether every SIC rate constraint meets the target rate.

    Feasible iff min(R_ij, R_i) >= R_t for every user i and every
    j in kappa_i, and additionally R_i >= R_t for every user (the j = i
    case).  The returned deficit sums min(min(R_ij, R_i) - R_t, 0) over
    the cross pairs only, so it is 0 for feasible actions and negative
    in proportion to how badly the cross constraints are violated.
    """
    H = composite_all(real, action.phases)
    _, own, cross = _rates_by_pair(H, action.beams, order, cfg.noise_power)
    return _feasibility(own, cross, cfg.R_t)


def encode_action(action: NetworkAction) -> np.ndarray:
    """Flatten to reals: beam real parts, beam imaginary parts, phase
    real parts, phase imaginary parts (beams row-major, user k first)."""
    return np.concatenate(
        [
            action.beams.real.ravel(),
            action.beams.imag.ravel(),
            action.phases.real,
            action.phases.imag,
        ]
    )


def decode_action(vec: np.ndarray, dims: SystemDims) -> NetworkAction:
    """Inverse of :func:`encode_action`."""
    vec = np.asarray(vec, dtype=float)
    expected = action_dim(dims)
    if vec.shape != (expected,):
        raise ValueError(f"expected action vector of length {expected}, got {vec.shape}")
    mk = dims.M * dims.K
    beams = (vec[:mk] + 1j * vec[mk : 2 * mk]).reshape(dims.K, dims.M)
    phases = vec[2 * mk : 2 * mk + dims.N] + 1j * vec[2 * mk + dims.N :]
    return NetworkAction(beams=beams, phases=phases)


def env_step(
    raw_action: np.ndarray,
    real: ChannelRealization,
    cfg: EnvConfig,
    prev_state: EnvState | None = None,
) -> StepOutcome:
    """Evaluate one raw action: project, re-derive the decoding order,
    score the rates, and emit the reward and successor observation.

    The successor state depends only on the projected action and the
    channel, so ``prev_state`` is accepted for interface symmetry but
    not consulted.
    """
    del prev_state
    action = decode_action(raw_action, cfg.dims)
    projected = project_action(action, cfg.P_t)
    order = decoding_order(real, projected.phases)
    H = composite_all(real, projected.phases)
    own_sinr, own, cross = _rates_by_pair(H, projected.beams, order, cfg.noise_power)
    feasible, deficit = _feasibility(own, cross, cfg.R_t)

    sum_rate = float(np.sum(own))
    reward = sum_rate if feasible else deficit

    next_state = EnvState(
        prev_sinr=own_sinr,
        prev_action=encode_action(projected),
        prev_beam_power=projected.beam_powers(),
    )
    return StepOutcome(
        reward=reward,
        sum_rate=sum_rate,
        feasible=feasible,
        rates=own,
        decoding_order=order,
        next_state=next_state,
    )


def initial_action(dims: SystemDims, rng: np.random.Generator) -> NetworkAction:
    """Episode-start action: identity beams, uniformly random phases."""
    beams = np.eye(dims.K, dims.M, dtype=complex)
    phases = np.exp(1j * rng.uniform(0.0, 2.0 * np.pi, size=dims.N))
    return NetworkAction(beams=beams, phases=phases)


def initial_state(
    real: ChannelRealization, cfg: EnvConfig, rng: np.random.Generator
) -> EnvState:
    """First observation of an episode, from evaluating the initial action."""
    raw = encode_action(initial_action(cfg.dims, rng))
    return env_step(raw, real, cfg).next_state
