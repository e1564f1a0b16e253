"""Collision-resolution cycle analysis.

Closed forms and distributions for the duration of a resolution cycle, the
per-round transmission probability optimizer, and the Bayesian collider-count
belief machinery used by the belief-driven protocol variant.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from ._opt import (
    belief_ack_cr,
    belief_nack_ce,
    belief_nack_cr,
    belief_silent_cr,
    cycle_pmf_table,
    duration_root,
    zw_collider_weights,
)


def success_prob(c: int, p: float, eps: float) -> float:
    """Per-slot resolution probability with c contenders at probability p."""
    if c < 1:
        raise ValueError("need at least one contender")
    return (1.0 - eps) * c * p * (1.0 - p) ** (c - 1)


@dataclass(frozen=True)
class PhaseTypeModel:
    """Absorbing-chain representation of a resolution cycle.

    Transient state i (0-based) is the (i+1)-th contention round, with
    c - i remaining contenders transmitting at probability p[i]; the last
    transient state is the singleton retry round. The absorbing state marks
    the end of the contention sequence.
    """

    c: int
    p: np.ndarray
    eps: float
    P: np.ndarray


def phase_type_model(c: int, p, eps: float) -> PhaseTypeModel:
    p = np.asarray(p, dtype=np.float64)
    if c < 1:
        raise ValueError("need at least one collider")
    if p.shape[0] < c:
        raise ValueError("probability vector shorter than the collider count")
    P = np.zeros((c + 1, c + 1))
    for i in range(c):
        s = success_prob(c - i, p[i], eps)
        P[i, i] = 1.0 - s
        P[i, i + 1] = s
    P[c, c] = 1.0
    return PhaseTypeModel(c=c, p=p, eps=eps, P=P)


def expected_cycle_duration(c: int, p, eps: float) -> float:
    """Closed-form expected cycle length for c initial colliders.

    Counts the geometric contention phases, the c-1 confirmation slots, and
    the erasure-triggered singleton retry with its closing silent slot.
    """
    p = np.asarray(p, dtype=np.float64)
    if c < 1:
        raise ValueError("need at least one collider")
    if p.shape[0] < c:
        raise ValueError("probability vector shorter than the collider count")
    if np.any(p[:c] <= 0.0):
        raise ValueError("a zero transmission probability gives an infinite cycle")
    if c == 1:
        return 1.0 + 1.0 / ((1.0 - eps) * p[0])
    total = c - 1.0 + eps + eps / ((1.0 - eps) * p[c - 1])
    for i in range(c - 1):
        total += 1.0 / success_prob(c - i, p[i], eps)
    return total


def cycle_duration_pmf(c: int, p, eps: float, tmax: int) -> np.ndarray:
    """Pmf of the cycle duration on 0..tmax."""
    p = np.asarray(p, dtype=np.float64)
    if p.shape[0] < c:
        raise ValueError("probability vector shorter than the collider count")
    return cycle_pmf_table(c, p, eps, tmax)


def cycle_duration_cdf(c: int, p, eps: float, t: int) -> float:
    """P(cycle duration <= t) for c initial colliders."""
    if t < 0:
        return 0.0
    return float(cycle_duration_pmf(c, p, eps, t).sum())


def collider_count_pmf_zw(n: int, lam: float, eps: float):
    """Unnormalized collider-count masses behind a failed slot, plus their sum.

    Returns (mass, p_f) where mass[c] is the joint probability of c fresh
    transmitters and a failure, and p_f is the total per-slot failure
    probability; mass / p_f is the conditional collider distribution.
    """
    mass = zw_collider_weights(n, lam, eps)
    return mass, float(mass.sum())


def cycle_cdf_mixture(n: int, lam: float, eps: float, p, t: int) -> float:
    """Cdf of the cycle duration unconditional on the collider count."""
    if t < 0:
        return 0.0
    mass, p_f = collider_count_pmf_zw(n, lam, eps)
    if p_f == 0.0:
        return 1.0
    total = 0.0
    for c in range(1, n + 1):
        if mass[c] > 0.0:
            total += mass[c] * cycle_duration_cdf(c, p, eps, t)
    return total / p_f


def cycle_mixture_pmf_table(weights, p, eps: float, tmax: int) -> np.ndarray:
    """Normalized cycle-duration pmf on 0..tmax for arbitrary collider weights."""
    weights = np.asarray(weights, dtype=np.float64)
    total_w = weights[1:].sum()
    out = np.zeros(tmax + 1)
    if total_w <= 0.0:
        return out
    p = np.asarray(p, dtype=np.float64)
    for c in range(1, weights.shape[0]):
        if weights[c] > 0.0:
            out += weights[c] * cycle_pmf_table(c, p, eps, tmax)
    return out / total_w


@lru_cache(maxsize=None)
def _p_star_single(n_i: int, lam_r: float, eps_r: float) -> float:
    if n_i <= 1:
        return 1.0
    w = zw_collider_weights(n_i, lam_r, eps_r)
    return float(duration_root(w))


def optimal_p_static(n: int, lam: float, eps: float) -> np.ndarray:
    """Per-round transmission probabilities minimizing expected cycle length.

    Round i treats n - i potential contenders as fresh traffic; the last
    round is a lone retry and transmits with probability 1. Results are
    cached on (remaining count, lambda, epsilon) rounded to 1e-6.
    """
    if n < 1:
        raise ValueError("need at least one node")
    lam_r = round(float(lam), 6)
    eps_r = round(float(eps), 6)
    return np.array(
        [_p_star_single(n - i, lam_r, eps_r) for i in range(n)], dtype=np.float64
    )


def export_p_table(path, entries) -> None:
    """Write (N_i, lambda, eps, p*) rows as a plain-text table."""
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("n_i lambda eps p_star\n")
        for n_i, lam, eps in entries:
            p = _p_star_single(int(n_i), round(float(lam), 6), round(float(eps), 6))
            fh.write(f"{int(n_i)} {lam!r} {eps!r} {p!r}\n")


@dataclass
class ColliderBelief:
    """Probability vector over collider counts 0..n, plus the round index."""

    phi: np.ndarray
    round: int = 0

    def __post_init__(self):
        self.phi = np.asarray(self.phi, dtype=np.float64)
        if np.any(self.phi < 0):
            raise ValueError("belief entries must be non-negative")
        total = self.phi.sum()
        if not np.isclose(total, 1.0, atol=1e-9):
            raise ValueError("belief must be normalized")


class InconsistentEventError(ValueError):
    """Raised when a belief update conditions on an impossible event."""


def deltaplus_prior(n: int, lam: float, eps: float) -> ColliderBelief:
    """Posterior over the collider count given a failed fresh-traffic slot."""
    mass, p_f = collider_count_pmf_zw(n, lam, eps)
    if p_f == 0.0:
        raise InconsistentEventError("a failure is impossible at these parameters")
    return ColliderBelief(phi=mass / p_f, round=0)


def deltaplus_update(
    belief: ColliderBelief, event: str, p_j: float, eps: float
) -> ColliderBelief:
    """Condition the collider belief on one observed contention event.

    `event` is one of "ack_cr", "silent_cr", "nack_cr", "nack_ce"; p_j is the
    transmission probability the contenders used in that slot (ignored for
    the confirmation-slot event).
    """
    phi = belief.phi.copy()
    if event == "ack_cr":
        total = belief_ack_cr(phi, p_j, eps)
    elif event == "silent_cr":
        total = belief_silent_cr(phi, p_j)
    elif event == "nack_cr":
        total = belief_nack_cr(phi, p_j, eps)
    elif event == "nack_ce":
        total = belief_nack_ce(phi, eps)
    else:
        raise ValueError(f"unknown event {event!r}")
    if total <= 0.0:
        raise InconsistentEventError(f"event {event!r} impossible under belief")
    return ColliderBelief(phi=phi, round=belief.round + 1)


def deltaplus_optimal_p(belief: ColliderBelief) -> float:
    """Transmission probability minimizing expected duration under the belief."""
    return float(duration_root(belief.phi))
