"""Uplink collision channel and the four downlink feedback models.

The uplink is a collision channel: two or more simultaneous transmissions
always fail, a lone transmission survives its node's erasure probability.
Downlink feedback (ACK with winner id / NACK / silence) reaches every node
through one of four models: ideal, noisy (Gaussian error on the decoded ACK
id), erasure (message lost but the loss is detectable), or deletion (message
lost without a trace, observed as silence).
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import IntEnum
from typing import Optional


class OutcomeKind(IntEnum):
    SILENT = 0
    SUCCESS = 1
    FAILURE = 2


class FeedbackKind(IntEnum):
    SILENT = 0
    ACK = 1
    NACK = 2
    MISSING = 3


class FeedbackModelKind(IntEnum):
    IDEAL = 0
    NOISY = 1
    ERASURE = 2
    DELETION = 3


class Phase(IntEnum):
    ZW = 0
    CR = 1
    CE = 2
    BT = 3


@dataclass(frozen=True)
class SlotOutcome:
    kind: OutcomeKind
    transmitter_count: int
    winner: Optional[int] = None

    def __post_init__(self):
        if self.kind == OutcomeKind.SILENT and self.transmitter_count != 0:
            raise ValueError("silent slot with transmitters")
        if self.kind == OutcomeKind.SUCCESS and (
            self.transmitter_count != 1 or self.winner is None
        ):
            raise ValueError("success needs exactly one transmitter and a winner")
        if self.transmitter_count >= 2 and self.kind != OutcomeKind.FAILURE:
            raise ValueError("two or more transmitters always collide")


@dataclass(frozen=True)
class FeedbackModel:
    kind: FeedbackModelKind = FeedbackModelKind.IDEAL
    sigma_f: float = 0.0
    eps_f: float = 0.0
    omega_f: float = 0.0

    def __post_init__(self):
        if self.sigma_f < 0:
            raise ValueError("sigma_f must be non-negative")
        if not (0 <= self.eps_f <= 1 and 0 <= self.omega_f <= 1):
            raise ValueError("eps_f/omega_f must lie in [0, 1]")

    @classmethod
    def ideal(cls):
        return cls(FeedbackModelKind.IDEAL)

    @classmethod
    def noisy(cls, sigma_f):
        return cls(FeedbackModelKind.NOISY, sigma_f=sigma_f)

    @classmethod
    def erasure(cls, eps_f):
        return cls(FeedbackModelKind.ERASURE, eps_f=eps_f)

    @classmethod
    def deletion(cls, omega_f):
        return cls(FeedbackModelKind.DELETION, omega_f=omega_f)


@dataclass(frozen=True)
class ObservedFeedback:
    """What one node decodes from the downlink for a single slot.

    MISSING only occurs under the erasure model: the node knows a message was
    sent but could not decode it. A deletion loss is delivered as SILENT since
    the node cannot tell it apart from a genuinely silent downlink.
    """

    kind: FeedbackKind
    ack_for: Optional[int] = None
    piggyback_phase: Optional[Phase] = None
    piggyback_max_psi: Optional[int] = None


def uplink_resolve(transmitters, eps, rng) -> SlotOutcome:
    """Resolve one uplink slot for the given transmitter set."""
    tx = sorted(transmitters)
    if len(tx) == 0:
        return SlotOutcome(OutcomeKind.SILENT, 0)
    if len(tx) == 1:
        n = tx[0]
        if rng.random() < eps[n - 1]:
            return SlotOutcome(OutcomeKind.FAILURE, 1)
        return SlotOutcome(OutcomeKind.SUCCESS, 1, winner=n)
    return SlotOutcome(OutcomeKind.FAILURE, len(tx))


def _round_half_away(x: float) -> int:
    if x >= 0:
        return int(math.floor(x + 0.5))
    return int(math.ceil(x - 0.5))


def noisy_id(m: int, n: int, w: float) -> int:
    """Decode a transmitted node id under additive real-valued noise.

    Rounds to the nearest codeword (ties away from zero) and wraps modulo the
    id space, so negative noise wraps to the top of the range.
    """
    return (_round_half_away(m - 1 + w) % n) + 1


def feedback_broadcast(
    outcome: SlotOutcome,
    model: FeedbackModel,
    piggyback: tuple,
    per_node_transmitted,
    rng,
) -> list[ObservedFeedback]:
    """Produce each node's observation of the downlink for one slot."""
    n = len(per_node_transmitted)
    pb_phase, pb_max_psi = piggyback
    if outcome.kind == OutcomeKind.SILENT:
        true_kind = FeedbackKind.SILENT
    elif outcome.kind == OutcomeKind.SUCCESS:
        true_kind = FeedbackKind.ACK
    else:
        true_kind = FeedbackKind.NACK

    observed = []
    for i in range(n):
        kind = true_kind
        ack_for = outcome.winner
        delivered = True
        if model.kind == FeedbackModelKind.NOISY and kind == FeedbackKind.ACK:
            if per_node_transmitted[i]:
                ack_for = i + 1
            else:
                w = rng.normal(0.0, model.sigma_f)
                ack_for = noisy_id(outcome.winner, n, w)
        elif model.kind == FeedbackModelKind.ERASURE and kind != FeedbackKind.SILENT:
            if rng.random() < model.eps_f:
                kind = FeedbackKind.MISSING
                ack_for = None
                delivered = False
        elif model.kind == FeedbackModelKind.DELETION and kind != FeedbackKind.SILENT:
            if rng.random() < model.omega_f:
                kind = FeedbackKind.SILENT
                ack_for = None
                delivered = False
        if kind in (FeedbackKind.ACK, FeedbackKind.NACK) and delivered:
            observed.append(
                ObservedFeedback(kind, ack_for, pb_phase, pb_max_psi)
            )
        else:
            observed.append(ObservedFeedback(kind, ack_for if kind == FeedbackKind.ACK else None))
    return observed
