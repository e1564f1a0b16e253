"""Shared compiled primitives for collision-cycle analysis.

These are the pieces both the analytical modules and the slot-level kernels
need: binomial collider weights, the weighted-duration stationarity root
(solved by bisection), phase-type duration tables for a resolution cycle, and
the Bayesian collider-belief updates.
"""

from __future__ import annotations

import numpy as np
from numba import njit

BISECT_TOL = 1e-8
BISECT_MAX_ITER = 200


@njit(cache=True)
def binom_pmf_vec(n, p):
    """Binomial(n, p) pmf over 0..n via the multiplicative recurrence."""
    out = np.zeros(n + 1)
    if p <= 0.0:
        out[0] = 1.0
        return out
    if p >= 1.0:
        out[n] = 1.0
        return out
    out[0] = (1.0 - p) ** n
    ratio = p / (1.0 - p)
    for c in range(1, n + 1):
        out[c] = out[c - 1] * ratio * (n - c + 1) / c
    return out


@njit(cache=True)
def zw_collider_weights(n, lam, eps):
    """Unnormalized collider-count masses behind a failed slot.

    Index c holds the joint probability of c simultaneous fresh transmitters
    and a failure: a lone transmitter fails only through an uplink erasure,
    two or more always collide.
    """
    w = binom_pmf_vec(n, lam)
    w[0] = 0.0
    if n >= 1:
        w[1] = w[1] * eps
    return w


@njit(cache=True)
def duration_root(w):
    """Root of the weighted expected-duration stationarity condition.

    `w[c]` weights the collider count c >= 1 (w[0] is ignored). The condition
    is  w1/p^2 + sum_{c>=2} w_c (1 - c p) / (c p^2 (1-p)^c) = 0, the zero of
    the derivative of sum_c w_c / sigma(c, p, eps) up to a positive factor.
    The left side starts positive and changes sign exactly once on (0, 1)
    whenever any w_c with c >= 2 is positive; otherwise the minimizer is the
    boundary p = 1.
    """
    n = w.shape[0] - 1
    tail = 0.0
    for c in range(2, n + 1):
        tail += w[c]
    if tail <= 0.0:
        return 1.0

    lo = 1e-12
    hi = 1.0 - 1e-12
    for _ in range(BISECT_MAX_ITER):
        mid = 0.5 * (lo + hi)
        g = w[1] / (mid * mid)
        for c in range(2, n + 1):
            base = (1.0 - mid) ** c
            if base <= 0.0:
                g = -np.inf
                break
            g += w[c] * (1.0 - c * mid) / (c * mid * mid * base)
        if g > 0.0:
            lo = mid
        else:
            hi = mid
        if hi - lo < BISECT_TOL:
            break
    return 0.5 * (lo + hi)


@njit(cache=True)
def success_prob_nb(c, p, eps):
    return (1.0 - eps) * c * p * (1.0 - p) ** (c - 1)


@njit(cache=True)
def cycle_pmf_table(c, pvec, eps, tmax):
    """Pmf of the resolution-cycle duration for c initial colliders, 0..tmax.

    The cycle is the slot sequence after the opening collision: one geometric
    contention phase per remaining collider interleaved with certain-collision
    confirmation slots, a final single-transmitter confirmation slot, and (on
    an erasure of that slot) a geometric singleton retry plus one closing
    silent slot.
    """
    pmf = np.zeros(tmax + 1)
    if c == 1:
        eta = 1.0 - (1.0 - eps) * pvec[0]
        for t in range(2, tmax + 1):
            pmf[t] = (1.0 - eta) * eta ** (t - 2)
        return pmf

    # a[s]: probability the c-1 contention phases finish in exactly s slots.
    n_tr = c - 1
    sig = np.empty(n_tr)
    for j in range(n_tr):
        sig[j] = success_prob_nb(c - j, pvec[j], eps)
    v = np.zeros(n_tr)
    v[0] = 1.0
    a = np.zeros(tmax + 1)
    for s in range(1, tmax + 1):
        absorbed = v[n_tr - 1] * sig[n_tr - 1]
        for j in range(n_tr - 1, 0, -1):
            v[j] = v[j] * (1.0 - sig[j]) + v[j - 1] * sig[j - 1]
        v[0] = v[0] * (1.0 - sig[0])
        a[s] = absorbed

    # q[t]: convolution of `a` with the geometric singleton retry.
    eta = 1.0 - (1.0 - eps) * pvec[c - 1]
    q = np.zeros(tmax + 1)
    for t in range(1, tmax + 1):
        q[t] = (1.0 - eta) * a[t - 1] + eta * q[t - 1]

    for t in range(tmax + 1):
        s1 = t - (c - 1)
        if 0 <= s1 <= tmax:
            pmf[t] += (1.0 - eps) * a[s1]
        s2 = t - c
        if 0 <= s2 <= tmax:
            pmf[t] += eps * q[s2]
    return pmf


# Collider-belief updates. Beliefs are length n+1 arrays over counts 0..n;
# each update returns the normalizer mass (0 means the event was impossible
# under the current belief).


@njit(cache=True)
def belief_ack_cr(phi, p, eps):
    n = phi.shape[0] - 1
    new = np.zeros(n + 1)
    total = 0.0
    for c in range(0, n):
        lik = (c + 1) * p * (1.0 - eps) * (1.0 - p) ** c
        new[c] = phi[c + 1] * lik
        total += new[c]
    if total > 0.0:
        for c in range(n + 1):
            new[c] /= total
    for c in range(n + 1):
        phi[c] = new[c]
    return total


@njit(cache=True)
def belief_silent_cr(phi, p):
    n = phi.shape[0] - 1
    total = 0.0
    for c in range(n + 1):
        phi[c] = phi[c] * (1.0 - p) ** c
        total += phi[c]
    if total > 0.0:
        for c in range(n + 1):
            phi[c] /= total
    return total


@njit(cache=True)
def belief_nack_cr(phi, p, eps):
    n = phi.shape[0] - 1
    total = 0.0
    for c in range(n + 1):
        p_nack = 1.0 - (1.0 - p) ** c - c * p * (1.0 - eps) * (1.0 - p) ** (c - 1)
        if p_nack < 0.0:
            p_nack = 0.0
        phi[c] = phi[c] * p_nack
        total += phi[c]
    if total > 0.0:
        for c in range(n + 1):
            phi[c] /= total
    return total


@njit(cache=True)
def belief_nack_ce(phi, eps):
    n = phi.shape[0] - 1
    total = 0.0
    for c in range(n + 1):
        if c == 0:
            phi[c] = 0.0
        elif c == 1:
            phi[c] = phi[c] * eps
        total += phi[c]
    if total > 0.0:
        for c in range(n + 1):
            phi[c] /= total
    return total
