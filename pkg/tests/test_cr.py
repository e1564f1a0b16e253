import itertools
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.stats import binom

from deltamac import _kernels as K
from deltamac.cr import (
    ColliderBelief,
    InconsistentEventError,
    collider_count_pmf_zw,
    cycle_cdf_mixture,
    cycle_duration_cdf,
    cycle_duration_pmf,
    deltaplus_optimal_p,
    deltaplus_prior,
    deltaplus_update,
    expected_cycle_duration,
    optimal_p_static,
    phase_type_model,
    success_prob,
)


def test_success_prob_examples():
    assert success_prob(1, 1.0, 0.0) == 1.0
    assert success_prob(2, 0.5, 0.0) == pytest.approx(0.5)
    assert success_prob(3, 0.5, 0.05) == pytest.approx(0.35625)


@given(
    st.integers(min_value=1, max_value=12),
    st.floats(min_value=0.01, max_value=0.99),
    st.floats(min_value=0.0, max_value=0.5),
)
@settings(max_examples=100, deadline=None)
def test_success_prob_vs_binomial_oracle(c, p, eps):
    assert success_prob(c, p, eps) == pytest.approx(
        (1 - eps) * binom.pmf(1, c, p), rel=1e-12
    )


def test_phase_type_matrix_shape_and_rows():
    m = phase_type_model(4, [0.5, 0.6, 0.7, 1.0], 0.05)
    assert m.P.shape == (5, 5)
    assert np.allclose(m.P.sum(axis=1), 1.0)
    # upper-bidiagonal transient block
    for i in range(4):
        for j in range(5):
            if j not in (i, i + 1):
                assert m.P[i, j] == 0.0
        assert m.P[i, i] == pytest.approx(1 - success_prob(4 - i, m.p[i], 0.05))


def test_expected_duration_singleton():
    assert expected_cycle_duration(1, [1.0], 0.0) == pytest.approx(2.0)


def test_expected_duration_two_colliders():
    assert expected_cycle_duration(2, [0.5, 1.0], 0.0) == pytest.approx(3.0)


def test_expected_duration_rejects_zero_probability():
    with pytest.raises(ValueError):
        expected_cycle_duration(2, [0.0, 1.0], 0.0)


def test_expected_duration_vs_monte_carlo():
    p = optimal_p_static(5, 0.025, 0.05)
    closed = expected_cycle_duration(3, p, 0.05)
    sims = K.cycle_mc(3, p, 0.05, 200_000, 99)
    assert abs(sims.mean() - closed) / closed < 0.02


def test_pmf_mean_matches_closed_form():
    """Analytic self-consistency: sum t * pmf(t) equals the closed form."""
    for c in range(1, 7):
        p = optimal_p_static(8, 0.03, 0.05)
        closed = expected_cycle_duration(c, p, 0.05)
        tmax = 4000
        pmf = cycle_duration_pmf(c, p, 0.05, tmax)
        assert pmf.sum() == pytest.approx(1.0, abs=1e-9)
        mean = float((np.arange(tmax + 1) * pmf).sum())
        assert mean == pytest.approx(closed, abs=1e-6)


def test_cdf_deterministic_singleton():
    assert cycle_duration_cdf(1, [1.0], 0.0, 2) == pytest.approx(1.0)
    assert cycle_duration_cdf(1, [1.0], 0.0, 1) == pytest.approx(0.0)


def test_cdf_monotone():
    p = optimal_p_static(6, 0.05, 0.05)
    vals = [cycle_duration_cdf(3, p, 0.05, t) for t in range(0, 100)]
    assert all(b >= a - 1e-15 for a, b in zip(vals, vals[1:]))


def test_cdf_vs_empirical():
    p = np.array([0.5, 1.0])
    lengths = K.cycle_mc(2, p, 0.0, 100_000, 5)
    tmax = int(lengths.max())
    model = np.cumsum(cycle_duration_pmf(2, p, 0.0, tmax))
    emp = np.bincount(lengths, minlength=tmax + 1).cumsum() / lengths.shape[0]
    assert np.abs(model - emp[: tmax + 1]).max() < 0.01


def test_collider_mass_enumeration_n2():
    # All four activation patterns at lam=1/2, no erasures: only the double
    # arrival fails.
    mass, p_f = collider_count_pmf_zw(2, 0.5, 0.0)
    assert mass[1] == 0.0
    assert mass[2] == pytest.approx(0.25)
    assert p_f == pytest.approx(0.25)


def test_collider_mass_no_singleton_without_erasure():
    mass, _ = collider_count_pmf_zw(10, 0.07, 0.0)
    assert mass[1] == 0.0


def test_collider_mass_normalizes():
    mass, p_f = collider_count_pmf_zw(12, 0.04, 0.05)
    assert (mass / p_f).sum() == pytest.approx(1.0)


def test_mixture_boundaries():
    p = optimal_p_static(20, 0.025, 0.05)
    assert cycle_cdf_mixture(20, 0.025, 0.05, p, 0) == 0.0
    assert cycle_cdf_mixture(20, 0.025, 0.05, p, 4000) == pytest.approx(1.0, abs=1e-9)


def test_mixture_vs_conditioned_empirical():
    p = optimal_p_static(20, 0.025, 0.05)
    lengths = K.zw_conditioned_cycle_mc(20, 0.025, 0.05, p, 30_000, 11)
    tmax = int(lengths.max())
    emp = np.bincount(lengths, minlength=tmax + 1).cumsum() / lengths.shape[0]
    worst = max(
        abs(cycle_cdf_mixture(20, 0.025, 0.05, p, t) - emp[t]) for t in range(tmax + 1)
    )
    assert worst < 0.02


def _duration_objective(weights, p, eps):
    total = np.zeros_like(p)
    for c in range(1, len(weights)):
        if weights[c] > 0:
            total += weights[c] / ((1 - eps) * c * p * (1 - p) ** (c - 1))
    return total


def test_optimal_p_last_round_is_one():
    p = optimal_p_static(6, 0.05, 0.05)
    assert p[-1] == 1.0


def test_optimal_p_vs_grid_argmin():
    from deltamac._opt import zw_collider_weights

    grid = np.arange(1e-4, 1.0, 1e-4)
    for n_i, lam, eps in [(2, 0.025, 0.05), (7, 0.005, 0.0), (12, 0.025, 0.05)]:
        w = zw_collider_weights(n_i, lam, eps)
        best = grid[np.argmin(_duration_objective(w, grid, eps))]
        p = optimal_p_static(n_i, lam, eps)[0]
        assert abs(p - best) < 1e-3


def test_optimal_p_local_optimality():
    from deltamac._opt import zw_collider_weights

    w = zw_collider_weights(10, 0.02, 0.05)
    p = optimal_p_static(10, 0.02, 0.05)[0]
    base = _duration_objective(w, np.array([p]), 0.05)[0]
    for dp in (-0.05, 0.05):
        q = min(max(p + dp, 1e-6), 1 - 1e-9)
        assert base <= _duration_objective(w, np.array([q]), 0.05)[0] + 1e-12


def test_stationarity_condition_single_sign_change():
    """The root condition crosses zero exactly once on (0, 1)."""
    from deltamac._opt import zw_collider_weights

    grid = np.linspace(1e-4, 1 - 1e-4, 2000)
    for n_i in (2, 5, 11, 20):
        w = zw_collider_weights(n_i, 0.025, 0.05)
        g = w[1] / grid**2
        for c in range(2, n_i + 1):
            g = g + w[c] * (1 - c * grid) / (c * grid**2 * (1 - grid) ** c)
        signs = np.sign(g)
        changes = np.count_nonzero(np.diff(signs))
        assert changes == 1


def test_prior_examples():
    b = deltaplus_prior(5, 0.1, 0.0)
    assert b.phi[0] == 0.0
    assert b.phi[1] == 0.0  # singletons cannot fail without erasures
    assert b.phi.sum() == pytest.approx(1.0)


def _enumerate_prior(n, lam, eps):
    """Activation-pattern enumeration of the collider posterior."""
    dist = np.zeros(n + 1)
    for pattern in itertools.product([0, 1], repeat=n):
        c = sum(pattern)
        p = lam ** c * (1 - lam) ** (n - c)
        if c >= 2:
            dist[c] += p
        elif c == 1:
            dist[c] += p * eps
    return dist / dist.sum()


def test_prior_vs_enumeration():
    b = deltaplus_prior(3, 0.3, 0.1)
    assert np.allclose(b.phi, _enumerate_prior(3, 0.3, 0.1), atol=1e-12)


def test_update_deterministic_shift():
    b = ColliderBelief(np.array([0.0, 0.0, 1.0, 0.0]))
    out = deltaplus_update(b, "ack_cr", 0.4, 0.1)
    assert out.phi[1] == pytest.approx(1.0)


def test_update_impossible_event_raises():
    b = ColliderBelief(np.array([0.0, 1.0, 0.0, 0.0]))
    with pytest.raises(InconsistentEventError):
        deltaplus_update(b, "nack_ce", 0.3, 0.0)


def test_updates_preserve_normalization():
    rng = np.random.default_rng(0)
    b = deltaplus_prior(6, 0.08, 0.05)
    for ev in ("silent_cr", "nack_cr", "ack_cr", "silent_cr"):
        b = deltaplus_update(b, ev, float(rng.uniform(0.2, 0.8)), 0.05)
        assert b.phi.sum() == pytest.approx(1.0, abs=1e-12)


def test_belief_optimal_p_examples():
    assert deltaplus_optimal_p(ColliderBelief(np.array([0.0, 1.0, 0.0]))) == 1.0
    p2 = deltaplus_optimal_p(ColliderBelief(np.array([0.0, 0.0, 1.0])))
    assert p2 == pytest.approx(0.5, abs=1e-7)


def test_belief_optimal_p_vs_grid():
    phi = np.array([0.0, 0.2, 0.5, 0.2, 0.1])
    p = deltaplus_optimal_p(ColliderBelief(phi))
    grid = np.arange(1e-4, 1.0, 1e-4)
    best = grid[np.argmin(_duration_objective(phi, grid, 0.05))]
    assert abs(p - best) < 1e-3


def test_belief_prior_consistent_with_static_optimum():
    """Optimizing under the fresh-traffic posterior equals the static rule."""
    n, lam, eps = 14, 0.02, 0.05
    b = deltaplus_prior(n, lam, eps)
    assert deltaplus_optimal_p(b) == pytest.approx(
        optimal_p_static(n, lam, eps)[0], abs=1e-6
    )
