"""Per-node protocol state machine: the op-level surface.

These wrappers drive the same compiled helpers as the episode kernel on a
single knowledge view, so a test exercising one node's transition exercises
exactly the code the simulator runs. State objects have value semantics:
transition functions return an updated copy.
"""

from __future__ import annotations

import copy
from dataclasses import dataclass, field

import numpy as np

from . import _kernels as K
from .channel import FeedbackKind, FeedbackModelKind, ObservedFeedback, Phase
from .cr import collider_count_pmf_zw, optimal_p_static


def highest_aoii_prob(theta: int, psi, lam, self_id: int) -> float:
    """Probability that no other node currently has a larger AoII.

    The product runs over the other nodes' bound surplus: each contributes
    (1-lam_m) to the power [psi_m - theta + 1]^+.
    """
    psi = np.asarray(psi)
    lam = np.asarray(lam, dtype=np.float64)
    out = 1.0
    for m in range(len(psi)):
        if m == self_id - 1:
            continue
        e = psi[m] - theta + 1
        if e > 0:
            out *= (1.0 - lam[m]) ** e
    return out


@dataclass(frozen=True)
class NodeConfig:
    """Static protocol configuration shared by every node."""

    n: int
    lam: np.ndarray
    eps_mean: float
    k_budget: int
    plus: bool = False
    bt_p_adjust: bool = False
    feedback_kind: FeedbackModelKind = FeedbackModelKind.IDEAL

    def __post_init__(self):
        object.__setattr__(self, "lam", np.asarray(self.lam, dtype=np.float64))

    @property
    def lam_mean(self) -> float:
        return float(self.lam.mean())

    def p_static(self) -> np.ndarray:
        return optimal_p_static(self.n, self.lam_mean, self.eps_mean)

    def phi0(self) -> np.ndarray:
        mass, p_f = collider_count_pmf_zw(self.n, self.lam_mean, self.eps_mean)
        return mass / p_f if p_f > 0 else np.zeros(self.n + 1)


@dataclass
class ProtocolState:
    """One node's protocol view: phase, membership, bounds, belief."""

    config: NodeConfig
    node_id: int
    slot: int = 0
    phase: Phase = Phase.ZW
    member: int = 0
    cr_round: int = 0
    cycle_start: int = 0
    psi: np.ndarray = None
    pre: np.ndarray = None
    snapshot: np.ndarray = None
    delta_hat: np.ndarray = None
    belief: np.ndarray = None
    pvec: np.ndarray = None
    last_p: float = 1.0

    def __post_init__(self):
        n = self.config.n
        if self.psi is None:
            self.psi = np.zeros(n, dtype=np.int64)
        if self.pre is None:
            self.pre = np.zeros(n, dtype=np.int64)
        if self.snapshot is None:
            self.snapshot = np.zeros(n, dtype=np.int64)
        if self.delta_hat is None:
            self.delta_hat = np.zeros(n, dtype=np.int64)
        if self.belief is None:
            self.belief = self.config.phi0()
        if self.pvec is None:
            self.pvec = self.config.p_static()
        for name in ("psi", "pre", "snapshot", "delta_hat"):
            setattr(self, name, np.asarray(getattr(self, name), dtype=np.int64))


def _view_arrays(state: ProtocolState):
    """Pack the state into single-view arrays for the compiled helpers."""
    n = state.config.n
    return dict(
        phase=np.array([int(state.phase)], dtype=np.int8),
        member=np.array([state.member], dtype=np.uint8),
        cr_round=np.array([state.cr_round], dtype=np.int64),
        cycle_start=np.array([state.cycle_start], dtype=np.int64),
        psi=state.psi.reshape(1, n).copy(),
        pre=state.pre.reshape(1, n).copy(),
        snapshot=state.snapshot.reshape(1, n).copy(),
        delta_hat=state.delta_hat.reshape(1, n).copy(),
        pvec=np.asarray(state.pvec, dtype=np.float64).reshape(1, n).copy(),
        belief=np.asarray(state.belief, dtype=np.float64).reshape(1, n + 1).copy(),
        last_p=np.array([state.last_p], dtype=np.float64),
    )


def _unpack(state: ProtocolState, arrs) -> ProtocolState:
    out = copy.copy(state)
    out.phase = Phase(int(arrs["phase"][0]))
    out.member = int(arrs["member"][0])
    out.cr_round = int(arrs["cr_round"][0])
    out.cycle_start = int(arrs["cycle_start"][0])
    out.psi = arrs["psi"][0].copy()
    out.pre = arrs["pre"][0].copy()
    out.snapshot = arrs["snapshot"][0].copy()
    out.delta_hat = arrs["delta_hat"][0].copy()
    out.pvec = arrs["pvec"][0].copy()
    out.belief = arrs["belief"][0].copy()
    out.last_p = float(arrs["last_p"][0])
    return out


def _scratch(n):
    return (
        np.zeros((2, 4096), dtype=np.int64),
        np.zeros((2, 4096), dtype=np.float64),
        np.zeros(n, dtype=np.int64),
    )


def decide_transmit(state: ProtocolState, x: int, theta: int, rng) -> bool:
    """Transmission decision for the current slot given the private state."""
    if x == 0:
        return False
    cfg = state.config
    if state.phase == Phase.ZW:
        return True
    if state.phase == Phase.CR:
        if state.member == 0:
            return False
        if cfg.plus:
            from ._opt import duration_root

            p = duration_root(np.asarray(state.belief, dtype=np.float64))
        else:
            p = state.pvec[min(state.cr_round, cfg.n - 1)]
        return rng.random() <= p
    if state.phase == Phase.CE:
        return state.member == 1
    lnl = np.log1p(-cfg.lam)
    homog = bool(np.all(cfg.lam == cfg.lam[0]))
    return bool(
        K._bt_transmit(state.psi, theta, state.node_id - 1, cfg.k_budget, lnl, homog)
    )


def advance_phase(
    state: ProtocolState, fb: ObservedFeedback, did_transmit: bool
) -> ProtocolState:
    """Apply one slot's observed feedback; returns the post-slot state."""
    cfg = state.config
    if fb.kind == FeedbackKind.MISSING and cfg.feedback_kind != FeedbackModelKind.ERASURE:
        raise ValueError(
            "MISSING feedback can only be observed under the erasure model"
        )
    arrs = _view_arrays(state)
    lnl = np.log1p(-cfg.lam)
    homog = bool(np.all(cfg.lam == cfg.lam[0]))
    scr_i, scr_f, new_row = _scratch(cfg.n)
    ack_id = (fb.ack_for - 1) if fb.ack_for is not None else -1
    n = cfg.n
    K.apply_feedback(
        1,
        np.array([int(fb.kind)], dtype=np.int8),
        np.array([ack_id], dtype=np.int64),
        np.array([1 if did_transmit else 0], dtype=np.uint8),
        np.ones(1, dtype=np.uint8),
        state.slot + 1,
        False,
        arrs["phase"], arrs["member"], arrs["cr_round"], arrs["cycle_start"],
        arrs["psi"], arrs["pre"], arrs["snapshot"], arrs["delta_hat"],
        arrs["pvec"], arrs["belief"], arrs["last_p"],
        cfg.lam, lnl, homog, cfg.k_budget, cfg.p_static(), cfg.phi0(),
        cfg.lam_mean, cfg.eps_mean, cfg.plus, cfg.bt_p_adjust,
        scr_i, scr_f, new_row,
        np.zeros(n + 1, dtype=np.uint8),
        np.zeros((n + 1, n), dtype=np.float64),
        np.zeros((n + 1, n + 1), dtype=np.float64),
    )
    out = _unpack(state, arrs)
    out.slot = state.slot + 1
    return out


def handle_missed_feedback(state: ProtocolState) -> ProtocolState:
    """Erasure-model loss: hold the phase per the mitigation rules."""
    return advance_phase(
        state, ObservedFeedback(FeedbackKind.MISSING), did_transmit=False
    )


def resync_from_piggyback(state: ProtocolState, fb: ObservedFeedback) -> ProtocolState:
    """Adopt the gateway's piggybacked phase and drain-bound cap."""
    if fb.piggyback_phase is None:
        raise ValueError("feedback carries no piggyback fields")
    cfg = state.config
    arrs = _view_arrays(state)
    max_psi = fb.piggyback_max_psi if fb.piggyback_max_psi is not None else 0
    K._resync(
        0, int(fb.piggyback_phase), max_psi, 0, state.slot,
        arrs["phase"], arrs["member"], arrs["cr_round"], arrs["cycle_start"],
        arrs["psi"], arrs["pre"], arrs["snapshot"], arrs["belief"],
        cfg.phi0(), cfg.p_static(), arrs["pvec"],
    )
    return _unpack(state, arrs)


def update_max_possible_aoii(
    psi, outcome: FeedbackKind, ack_for: int | None, lam, k_budget: int
) -> np.ndarray:
    """One drain-step bound update after a non-failure slot.

    `outcome` is the public slot result (SILENT or ACK); on an ACK the
    acknowledged node's bound resets to zero, everyone else keeps the
    largest silence-consistent age plus one elapsed slot.
    """
    psi = np.asarray(psi, dtype=np.int64)
    lam = np.asarray(lam, dtype=np.float64)
    n = psi.shape[0]
    lnl = np.log1p(-lam)
    homog = bool(np.all(lam == lam[0]))
    scr_i, scr_f, new_row = _scratch(n)
    ack_id = (ack_for - 1) if ack_for is not None else -1
    K._bt_update_view(
        psi, new_row, ack_id, k_budget, lnl, lam, homog, scr_i, scr_f
    )
    return new_row.copy()
