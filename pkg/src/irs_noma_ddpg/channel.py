"""Random channel synthesis for an IRS-assisted MISO downlink.

Direct BS-user links are Rayleigh faded, BS-IRS and IRS-user links are
Rician with a unit line-of-sight component, and every link is scaled by
1/sqrt(d^alpha) path loss.  All sampling goes through an explicit
``numpy.random.Generator`` so realizations are reproducible and safe to
draw in parallel from independent streams.
"""

from __future__ import annotations

import hashlib
import warnings
from dataclasses import dataclass

import numpy as np

# Tolerance for |phi_n| == 1 on entry to composite_channel; the phase
# projection produces unit modulus up to floating-point rounding.
PHASE_TOL = 1e-6


@dataclass(frozen=True)
class SystemDims:
    """Network dimensions: M BS antennas, N IRS elements, K users."""

    M: int
    N: int
    K: int

    def __post_init__(self) -> None:
        if min(self.M, self.N, self.K) <= 0:
            raise ValueError(f"all dimensions must be strictly positive, got {self}")
        if self.M > self.K:
            warnings.warn(
                f"M={self.M} exceeds K={self.K}; the downlink model assumes "
                "no more antennas than users",
                stacklevel=2,
            )


@dataclass(frozen=True)
class FadingConfig:
    """Statistical parameters of the fading model.

    ``alpha`` is the path-loss exponent, ``rician_factor`` the LoS/NLoS
    power ratio of the BS-IRS and IRS-user links, ``d_bs_irs`` the fixed
    BS-IRS distance, and the two ranges are the uniform sampling
    intervals for BS-user and IRS-user distances (meters).
    """

    alpha: float = 2.0
    rician_factor: float = 1.0
    d_bs_irs: float = 50.0
    range_dd: tuple[float, float] = (45.0, 50.0)
    range_dr: tuple[float, float] = (5.0, 10.0)
    seed: int | None = None

    def __post_init__(self) -> None:
        if self.alpha <= 0:
            raise ValueError(f"path-loss exponent must be positive, got {self.alpha}")
        if self.rician_factor < 0:
            raise ValueError(f"Rician factor must be nonnegative, got {self.rician_factor}")
        if self.d_bs_irs <= 0:
            raise ValueError(f"BS-IRS distance must be positive, got {self.d_bs_irs}")
        for name, (lo, hi) in (("range_dd", self.range_dd), ("range_dr", self.range_dr)):
            if not lo < hi:
                raise ValueError(f"{name} must satisfy lower < upper, got ({lo}, {hi})")


@dataclass(frozen=True)
class ChannelRealization:
    """One episode's worth of channel state.

    ``G`` is the (N, M) BS-IRS matrix, ``h_d`` the (K, M) direct links
    (row k = user k), ``h_r`` the (K, N) reflective links.  Distances
    used for the path-loss scaling are kept for logging.
    """

    G: np.ndarray
    h_d: np.ndarray
    h_r: np.ndarray
    dist_direct: np.ndarray
    dist_reflect: np.ndarray
    dist_bs_irs: float

    def __post_init__(self) -> None:
        N, M = self.G.shape
        K = self.h_d.shape[0]
        if self.h_d.shape != (K, M) or self.h_r.shape != (K, N):
            raise ValueError(
                f"inconsistent shapes: G {self.G.shape}, h_d {self.h_d.shape}, "
                f"h_r {self.h_r.shape}"
            )
        if self.dist_direct.shape != (K,) or self.dist_reflect.shape != (K,):
            raise ValueError("distance vectors must have one entry per user")
        for arr in (self.G, self.h_d, self.h_r):
            if not np.all(np.isfinite(arr.view(np.float64))):
                raise ValueError("channel entries must be finite")

    @property
    def dims(self) -> SystemDims:
        N, M = self.G.shape
        return SystemDims(M=M, N=N, K=self.h_d.shape[0])

    def digest(self) -> str:
        """Stable short hash of all channel entries, for run logs."""
        h = hashlib.sha256()
        for arr in (self.G, self.h_d, self.h_r):
            h.update(np.ascontiguousarray(arr).tobytes())
        return h.hexdigest()[:16]


def complex_normal(rng: np.random.Generator, shape: tuple[int, ...]) -> np.ndarray:
    """CN(0,1) draws: real and imaginary parts i.i.d. N(0, 1/2)."""
    re = rng.standard_normal(shape)
    im = rng.standard_normal(shape)
    return (re + 1j * im) / np.sqrt(2.0)


def sample_direct_channel(
    dims: SystemDims, cfg: FadingConfig, rng: np.random.Generator
) -> tuple[np.ndarray, np.ndarray]:
    """Rayleigh BS-user links with per-user random distance.

    Returns the (K, M) channel matrix and the (K,) distances.  Row k is
    a CN(0,1) vector scaled by 1/sqrt(d_k^alpha) with d_k drawn
    uniformly from ``cfg.range_dd``.
    """
    dists = rng.uniform(*cfg.range_dd, size=dims.K)
    tilde = complex_normal(rng, (dims.K, dims.M))
    h_d = tilde / np.sqrt(dists[:, None] ** cfg.alpha)
    return h_d, dists


def sample_rician_channel(
    rows: int,
    cols: int,
    distance: float,
    cfg: FadingConfig,
    rng: np.random.Generator,
) -> np.ndarray:
    """(rows, cols) Rician channel with all-ones LoS component.

    sqrt(v/(1+v)) * 1 + sqrt(1/(1+v)) * W, scaled by 1/sqrt(d^alpha),
    where v is the Rician factor and W has CN(0,1) entries.
    """
    if rows < 1 or cols < 1:
        raise ValueError("matrix dimensions must be at least 1")
    if distance <= 0:
        raise ValueError(f"distance must be positive, got {distance}")
    v = cfg.rician_factor
    los = np.ones((rows, cols), dtype=complex)
    nlos = complex_normal(rng, (rows, cols))
    return (np.sqrt(v / (1.0 + v)) * los + np.sqrt(1.0 / (1.0 + v)) * nlos) / np.sqrt(
        distance**cfg.alpha
    )


def sample_realization(
    dims: SystemDims, cfg: FadingConfig, rng: np.random.Generator
) -> ChannelRealization:
    """Draw one full channel realization (all links, fresh distances)."""
    G = sample_rician_channel(dims.N, dims.M, cfg.d_bs_irs, cfg, rng)
    dist_reflect = rng.uniform(*cfg.range_dr, size=dims.K)
    h_r = np.vstack(
        [
            sample_rician_channel(dims.N, 1, dist_reflect[k], cfg, rng).ravel()
            for k in range(dims.K)
        ]
    )
    h_d, dist_direct = sample_direct_channel(dims, cfg, rng)
    return ChannelRealization(
        G=G,
        h_d=h_d,
        h_r=h_r,
        dist_direct=dist_direct,
        dist_reflect=dist_reflect,
        dist_bs_irs=cfg.d_bs_irs,
    )


def _check_unit_modulus(phases: np.ndarray) -> None:
    dev = np.max(np.abs(np.abs(phases) - 1.0))
    if dev > PHASE_TOL:
        raise ValueError(
            f"phase coefficients must have unit modulus (max deviation {dev:.3e}); "
            "project the action first"
        )


def composite_channel(
    real: ChannelRealization,
    phases: np.ndarray,
    user: int,
    *,
    check_phases: bool = True,
) -> np.ndarray:
    """Effective row-vector channel h_d^H + h_r^H diag(phases) G of one user."""
    phases = np.asarray(phases)
    if phases.shape != (real.G.shape[0],):
        raise ValueError(f"expected {real.G.shape[0]} phase coefficients, got {phases.shape}")
    if check_phases:
        _check_unit_modulus(phases)
    return np.conj(real.h_d[user]) + (np.conj(real.h_r[user]) * phases) @ real.G


def composite_all(
    real: ChannelRealization, phases: np.ndarray, *, check_phases: bool = True
) -> np.ndarray:
    """All composite channels at once; row k is user k's effective channel."""
    phases = np.asarray(phases)
    if check_phases:
        _check_unit_modulus(phases)
    return np.conj(real.h_d) + (np.conj(real.h_r) * phases[None, :]) @ real.G
