"""Ground-truth physical process: anomaly dynamics and age accounting.

Each sensor is a two-state chain: normal (0) flips to anomalous (1) with its
activation probability, and the anomalous state is absorbing until the sensor
gets a report through. Slot ordering contract: (1) anomalies sampled,
(2) transmission decisions, (3) uplink outcome, (4) feedback broadcast,
(5) ages updated. Under this contract a same-slot successful report of a
same-slot anomaly leaves the AoII at 0, and the first unresolved anomalous
slot measures AoII = 1.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


@dataclass(frozen=True)
class SystemParams:
    """Static system parameters: node count, activation and erasure vectors."""

    n: int
    lam: np.ndarray
    eps: np.ndarray

    def __post_init__(self):
        lam = np.asarray(self.lam, dtype=np.float64)
        eps = np.asarray(self.eps, dtype=np.float64)
        object.__setattr__(self, "lam", lam)
        object.__setattr__(self, "eps", eps)
        if self.n < 1:
            raise ValueError("need at least one node")
        if lam.shape != (self.n,) or eps.shape != (self.n,):
            raise ValueError("lambda/epsilon vectors must have length n")
        if np.any(lam < 0) or np.any(lam >= 1):
            raise ValueError("activation probabilities must lie in [0, 1)")
        if np.any(eps < 0) or np.any(eps >= 1):
            raise ValueError("erasure probabilities must lie in [0, 1)")

    @property
    def rho(self) -> float:
        """Offered load: sum of the activation probabilities."""
        return float(self.lam.sum())

    @classmethod
    def homogeneous(cls, n: int, rho: float, eps: float) -> "SystemParams":
        return cls(n=n, lam=np.full(n, rho / n), eps=np.full(n, eps))


@dataclass
class NodeRecord:
    """Per-sensor ground truth: anomaly bit, AoI and AoII in slots."""

    node_id: int
    x: int = 0
    delta: int = 0
    theta: int = 0


def step_anomaly(x: int, lam: float, rng) -> int:
    """Advance the anomaly bit one slot; state 1 is absorbing.

    The reset to 0 is not part of the chain step: it happens only through a
    successful report, applied by `update_ages`.
    """
    if x == 1:
        return 1
    return 1 if rng.random() < lam else 0


def update_ages(rec: NodeRecord, success: bool) -> NodeRecord:
    """Apply the end-of-slot age update given the slot's report outcome."""
    if success:
        return NodeRecord(node_id=rec.node_id, x=0, delta=0, theta=0)
    return NodeRecord(
        node_id=rec.node_id,
        x=rec.x,
        delta=rec.delta + 1,
        theta=rec.theta + 1 if rec.x == 1 else rec.theta,
    )


def violation_indicator(theta: int, theta_max: int) -> bool:
    """True when the AoII strictly exceeds the threshold."""
    return theta > theta_max
