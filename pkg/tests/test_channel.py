import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from deltamac.channel import (
    FeedbackKind,
    FeedbackModel,
    ObservedFeedback,
    OutcomeKind,
    Phase,
    SlotOutcome,
    feedback_broadcast,
    noisy_id,
    uplink_resolve,
)


def test_uplink_empty_is_silent():
    out = uplink_resolve(set(), np.zeros(5), np.random.default_rng(0))
    assert out.kind == OutcomeKind.SILENT and out.transmitter_count == 0


def test_uplink_noiseless_singleton_succeeds():
    out = uplink_resolve({3}, np.zeros(5), np.random.default_rng(0))
    assert out.kind == OutcomeKind.SUCCESS and out.winner == 3


def test_uplink_two_transmitters_collide():
    out = uplink_resolve({2, 5}, np.zeros(5), np.random.default_rng(0))
    assert out.kind == OutcomeKind.FAILURE and out.transmitter_count == 2


def test_uplink_singleton_erasure_rate():
    rng = np.random.default_rng(1)
    eps = np.full(3, 0.3)
    fails = sum(
        uplink_resolve({1}, eps, rng).kind == OutcomeKind.FAILURE
        for _ in range(20000)
    )
    assert abs(fails / 20000 - 0.3) < 3 * math.sqrt(0.3 * 0.7 / 20000)


def test_slot_outcome_invariants():
    with pytest.raises(ValueError):
        SlotOutcome(OutcomeKind.SILENT, 1)
    with pytest.raises(ValueError):
        SlotOutcome(OutcomeKind.SUCCESS, 2, winner=1)
    with pytest.raises(ValueError):
        SlotOutcome(OutcomeKind.SUCCESS, 1)  # no winner


def test_noisy_id_examples():
    assert noisy_id(7, 20, 0.0) == 7
    assert noisy_id(1, 20, -1.0) == 20
    assert noisy_id(20, 20, 1.0) == 1


def _oracle_noisy_id(m, n, w):
    # Independent modular arithmetic: round half away from zero, wrap.
    shifted = m - 1 + w
    r = math.floor(shifted + 0.5) if shifted >= 0 else math.ceil(shifted - 0.5)
    return (int(r) % n) + 1


@given(
    st.integers(min_value=1, max_value=50),
    st.integers(min_value=1, max_value=50),
    st.floats(min_value=-200, max_value=200, allow_nan=False),
)
@settings(max_examples=300, deadline=None)
def test_noisy_id_against_oracle(m, n, w):
    if m > n:
        m = ((m - 1) % n) + 1
    got = noisy_id(m, n, w)
    assert got == _oracle_noisy_id(m, n, w)
    assert 1 <= got <= n


def _bcast(outcome, model, transmitted, seed=0, piggy=(Phase.ZW, 0)):
    rng = np.random.default_rng(seed)
    return feedback_broadcast(outcome, model, piggy, transmitted, rng)


def test_ideal_broadcast_identical():
    out = SlotOutcome(OutcomeKind.SUCCESS, 1, winner=4)
    obs = _bcast(out, FeedbackModel.ideal(), [False] * 6)
    assert all(o.kind == FeedbackKind.ACK and o.ack_for == 4 for o in obs)
    assert len(set((o.kind, o.ack_for) for o in obs)) == 1


def test_noisy_failure_always_nack():
    out = SlotOutcome(OutcomeKind.FAILURE, 3)
    obs = _bcast(out, FeedbackModel.noisy(5.0), [False] * 6)
    assert all(o.kind == FeedbackKind.NACK for o in obs)


def test_noisy_transmitter_decodes_own_ack():
    out = SlotOutcome(OutcomeKind.SUCCESS, 1, winner=2)
    transmitted = [False, True, False, False]
    for seed in range(20):
        obs = _bcast(out, FeedbackModel.noisy(8.0), transmitted, seed=seed)
        assert obs[1].ack_for == 2


def test_erasure_certain_loss():
    out = SlotOutcome(OutcomeKind.SUCCESS, 1, winner=4)
    obs = _bcast(out, FeedbackModel.erasure(1.0), [False] * 6)
    assert all(o.kind == FeedbackKind.MISSING for o in obs)


def test_erasure_silent_slot_observed_silent():
    out = SlotOutcome(OutcomeKind.SILENT, 0)
    obs = _bcast(out, FeedbackModel.erasure(1.0), [False] * 6)
    assert all(o.kind == FeedbackKind.SILENT for o in obs)


def test_deletion_loss_is_silent():
    out = SlotOutcome(OutcomeKind.FAILURE, 2)
    obs = _bcast(out, FeedbackModel.deletion(1.0), [False] * 6)
    assert all(o.kind == FeedbackKind.SILENT for o in obs)
    assert all(o.piggyback_phase is None for o in obs)


def test_piggyback_attached_to_delivered_messages():
    out = SlotOutcome(OutcomeKind.FAILURE, 2)
    obs = _bcast(out, FeedbackModel.ideal(), [False] * 4, piggy=(Phase.BT, 7))
    assert all(o.piggyback_phase == Phase.BT and o.piggyback_max_psi == 7 for o in obs)
    silent = _bcast(SlotOutcome(OutcomeKind.SILENT, 0), FeedbackModel.ideal(), [False] * 4)
    assert all(o.piggyback_phase is None for o in silent)


def test_noisy_kind_class_common_across_nodes():
    rng = np.random.default_rng(3)
    model = FeedbackModel.noisy(3.0)
    for _ in range(50):
        k = rng.integers(0, 3)
        if k == 0:
            out = SlotOutcome(OutcomeKind.SILENT, 0)
        elif k == 1:
            out = SlotOutcome(OutcomeKind.SUCCESS, 1, winner=int(rng.integers(1, 9)))
        else:
            out = SlotOutcome(OutcomeKind.FAILURE, 2)
        obs = feedback_broadcast(out, model, (None, None), [False] * 8, rng)
        assert len(set(o.kind for o in obs)) == 1


def test_noisy_misdecode_frequency():
    """ACK misdecode rate matches P(|rounded noise| != 0)."""
    sigma = 1.5
    rng = np.random.default_rng(7)
    model = FeedbackModel.noisy(sigma)
    out = SlotOutcome(OutcomeKind.SUCCESS, 1, winner=10)
    trials = 10**5
    wrong = 0
    transmitted = [False] * 20
    for _ in range(trials):
        obs = feedback_broadcast(out, model, (None, None), transmitted, rng)
        if obs[0].ack_for != 10:
            wrong += 1
    p_err = 2.0 * (1.0 - 0.5 * (1.0 + math.erf(0.5 / (sigma * math.sqrt(2.0)))))
    se = math.sqrt(p_err * (1 - p_err) / trials)
    assert abs(wrong / trials - p_err) < 3 * se


def test_feedback_model_validation():
    with pytest.raises(ValueError):
        FeedbackModel.noisy(-1.0)
    with pytest.raises(ValueError):
        FeedbackModel.erasure(1.5)
