"""Deterministic counter-based random streams for the simulation kernels.

Each stream is a single uint64 counter advanced by the splitmix64 increment and
finalized per draw. Streams are seeded far apart (mixed seed ^ stream id), so
per-node substreams stay aligned across protocol variants: stream k always
yields the same sequence for the same episode seed, which is what gives the
common-random-numbers guarantee for anomaly sample paths.
"""

from __future__ import annotations

import math

import numpy as np
from numba import njit

U64 = np.uint64

_GAMMA = U64(0x9E3779B97F4A7C15)
_MIX1 = U64(0xBF58476D1CE4E5B9)
_MIX2 = U64(0x94D049BB133111EB)
_TWO53 = 9007199254740992.0


@njit(cache=True, inline="always")
def _mix64(z):
    z = (z ^ (z >> U64(30))) * _MIX1
    z = (z ^ (z >> U64(27))) * _MIX2
    return z ^ (z >> U64(31))


@njit(cache=True)
def make_streams(seed, n_streams):
    """Allocate `n_streams` independent counters derived from `seed`."""
    states = np.empty(n_streams, dtype=np.uint64)
    root = _mix64(U64(seed) + _GAMMA)
    for k in range(n_streams):
        states[k] = _mix64(root ^ (U64(k + 1) * _GAMMA))
    return states


@njit(cache=True, inline="always")
def next_u64(states, k):
    s = states[k] + _GAMMA
    states[k] = s
    return _mix64(s)


@njit(cache=True, inline="always")
def rand_u01(states, k):
    """Uniform draw in (0, 1] with 53-bit resolution (safe for log)."""
    return (np.float64(next_u64(states, k) >> U64(11)) + 1.0) / _TWO53


@njit(cache=True, inline="always")
def rand_bernoulli(states, k, p):
    return rand_u01(states, k) <= p


@njit(cache=True, inline="always")
def rand_normal(states, k, sigma):
    u1 = rand_u01(states, k)
    u2 = rand_u01(states, k)
    return sigma * math.sqrt(-2.0 * math.log(u1)) * math.cos(2.0 * math.pi * u2)


@njit(cache=True, inline="always")
def rand_geometric(states, k, p):
    """Number of Bernoulli(p) trials up to and including the first success."""
    if p >= 1.0:
        return 1
    u = rand_u01(states, k)
    return int(math.ceil(math.log(u) / math.log(1.0 - p)))
