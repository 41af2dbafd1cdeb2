"""Compiled inner loops for the sampler hot path.

These mirror :func:`boxhaz.model.log_likelihood` and
:func:`boxhaz.model.h_gamma` but take precomputed arrays and avoid
temporaries.  Agreement with the reference implementations is tested.
"""

import math

import numpy as np
from numba import njit

_LOG_FLOOR = math.log(1e-300)


@njit(cache=True)
def loglik_shift(eta_rest, zcol, x, lam, gamma, nu, jidx, E):
    """Log-likelihood with linear predictor ``eta_rest + x * zcol``.

    ``jidx[i]`` is the interval holding subject ``i``'s observed time and
    ``E[i, j]`` its exposure in interval ``j`` (zero beyond ``jidx[i]``).
    """
    n, J = E.shape
    for j in range(J):
        if not lam[j] > 0.0:
            return -np.inf
    total = 0.0
    if gamma == 0.0:
        for i in range(n):
            eta = eta_rest[i] + x * zcol[i]
            acc = 0.0
            for j in range(jidx[i] + 1):
                acc += lam[j] * E[i, j]
            total -= math.exp(eta) * acc
            if nu[i] == 1:
                total += math.log(lam[jidx[i]]) + eta
        return total
    inv = 1.0 / gamma
    lamg = np.empty(J)
    minlamg = np.inf
    for j in range(J):
        lamg[j] = lam[j] ** gamma
        if lamg[j] < minlamg:
            minlamg = lamg[j]
    for i in range(n):
        geta = gamma * (eta_rest[i] + x * zcol[i])
        if minlamg + geta < 0.0:
            return -np.inf
        for j in range(jidx[i] + 1):
            e = E[i, j]
            if e > 0.0:
                total -= (lamg[j] + geta) ** inv * e
        if nu[i] == 1:
            base = lamg[jidx[i]] + geta
            if base <= 0.0:
                return -np.inf
            lh = inv * math.log(base)
            if lh < _LOG_FLOOR:
                return -np.inf
            total += lh
    return total


@njit(cache=True)
def h_shift(r_rest, zcol, x, zk, minlamg, gamma):
    """``min_i (minlamg + gamma * (r_rest_i + x * zcol_i)) / (gamma * zk_i)``."""
    n = r_rest.shape[0]
    h = np.inf
    for i in range(n):
        v = (minlamg + gamma * (r_rest[i] + x * zcol[i])) / (gamma * zk[i])
        if v < h:
            h = v
    return h


@njit(cache=True)
def bounds_shift(eta_rest, zcol, minlamg, gamma):
    """Admissible range of ``x`` in ``minlamg + gamma*(eta_rest + x*zcol) >= 0``."""
    lo = -np.inf
    hi = np.inf
    for i in range(eta_rest.shape[0]):
        z = zcol[i]
        slack = minlamg + gamma * eta_rest[i]
        if z > 0.0:
            v = -slack / (gamma * z)
            if v > lo:
                lo = v
        elif z < 0.0:
            v = -slack / (gamma * z)
            if v < hi:
                hi = v
    return lo, hi
