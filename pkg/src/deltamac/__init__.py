"""Simulator and analytical toolkit for AoII-minimizing anomaly reporting.

A discrete-time collision channel carries alarm reports from sensors to a
gateway. The main protocol coordinates retransmissions through commonly
known acknowledgment history; this package provides its slot-level
simulator, exact collision-cycle analysis, a semi-Markov design model,
five benchmark protocols, and a sweep-oriented command line.
"""

from .baselines import grid_search_params, maf_poll, rr_poll, zw_family_decide
from .channel import (
    FeedbackKind,
    FeedbackModel,
    FeedbackModelKind,
    ObservedFeedback,
    OutcomeKind,
    Phase,
    SlotOutcome,
    feedback_broadcast,
    noisy_id,
    uplink_resolve,
)
from .cr import (
    ColliderBelief,
    cycle_cdf_mixture,
    cycle_duration_cdf,
    deltaplus_optimal_p,
    deltaplus_prior,
    deltaplus_update,
    expected_cycle_duration,
    optimal_p_static,
    success_prob,
)
from .domain import NodeRecord, SystemParams, step_anomaly, update_ages, violation_indicator
from .engine import (
    BaselineConfig,
    DeltaConfig,
    EpisodeConfig,
    MetricsLedger,
    SimulationInvariantError,
    run_episode,
    run_heterogeneity_sweep,
)
from .protocol import (
    NodeConfig,
    ProtocolState,
    advance_phase,
    decide_transmit,
    handle_missed_feedback,
    highest_aoii_prob,
    resync_from_piggyback,
    update_max_possible_aoii,
)
from .smm import build_model, collision_prob_bt, k_from_threshold, optimize_k, steady_state

__version__ = "0.1.0"
