"""Independent brute-force evaluators used as test oracles.

Everything here is deliberately loop-based and written directly from
the signal-model definitions, sharing no code with the package.
"""

from __future__ import annotations

import numpy as np


def composite_rows(real, phases) -> np.ndarray:
    """Elementwise h_d^H + sum_n conj(h_r[n]) * phi_n * G[n, :], all users."""
    N, M = real.G.shape
    K = real.h_d.shape[0]
    H = np.zeros((K, M), dtype=complex)
    for k in range(K):
        for m in range(M):
            acc = np.conj(real.h_d[k, m])
            for n in range(N):
                acc += np.conj(real.h_r[k, n]) * phases[n] * real.G[n, m]
            H[k, m] = acc
    return H


def sorted_by_gain(real, phases) -> list[int]:
    """Users sorted by composite gain ascending, ties by index."""
    H = composite_rows(real, phases)
    gains = [sum(abs(H[k, m]) ** 2 for m in range(H.shape[1])) for k in range(H.shape[0])]
    return sorted(range(len(gains)), key=lambda k: (gains[k], k))


def sinr_pair(real, phases, beams, order, i, j, noise) -> float:
    """SINR of user i's signal decoded at user j."""
    H = composite_rows(real, phases)
    order = [int(u) for u in order]
    kappa = order[order.index(i) + 1 :]
    num = abs(np.dot(H[j], beams[i])) ** 2
    den = noise + sum(abs(np.dot(H[j], beams[k])) ** 2 for k in kappa)
    return num / den


def feasibility_pairs(real, phases, beams, order, noise, R_t) -> tuple[bool, float]:
    """(feasible, deficit) by direct enumeration of every rate constraint."""
    order = [int(u) for u in order]

    def rate_at(i, j):
        return float(np.log2(1.0 + sinr_pair(real, phases, beams, order, i, j, noise)))

    feasible = True
    deficit = 0.0
    for pos, i in enumerate(order):
        own = rate_at(i, i)
        if own < R_t:
            feasible = False
        for j in order[pos + 1 :]:
            margin = min(rate_at(i, j), own) - R_t
            if margin < 0:
                feasible = False
                deficit += margin
    return feasible, deficit


def finite_difference_grads(f, arrays: list[np.ndarray], step: float = 1e-5) -> list[np.ndarray]:
    """Central finite differences of scalar f() w.r.t. each array, in place."""
    grads = []
    for arr in arrays:
        g = np.zeros_like(arr)
        flat = arr.ravel()
        gflat = g.ravel()
        for idx in range(flat.size):
            orig = flat[idx]
            flat[idx] = orig + step
            f_plus = f()
            flat[idx] = orig - step
            f_minus = f()
            flat[idx] = orig
            gflat[idx] = (f_plus - f_minus) / (2.0 * step)
        grads.append(g)
    return grads
