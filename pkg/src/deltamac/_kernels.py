"""Slot-level simulation kernels.

Everything on the hot path lives here as numba-compiled functions: the
four-phase protocol state machine with per-node knowledge views, the five
benchmark protocols, the cycle-level Monte Carlo oracles, and the grid
evaluation loop for baseline tuning.

State layout for the main protocol: arrays carry n+1 views, one per node
plus a final row for the gateway-side reference tracker, which applies the
same public bookkeeping to the true outcome sequence. Under ideal feedback
every node's view must match the reference exactly (checked in debug mode).
All views of one slot are handled by a single `apply_feedback` call: the
per-view transition body is written once there, and the op-level wrappers
drive the same function on one-view arrays.
"""

from __future__ import annotations

import math

import numpy as np
from numba import njit

from ._opt import (
    belief_ack_cr,
    belief_nack_ce,
    belief_nack_cr,
    belief_silent_cr,
    binom_pmf_vec,
    duration_root,
)
from ._rng import make_streams, rand_normal, rand_u01

# Phases
ZW, CR, CE, BT = 0, 1, 2, 3
# Feedback kinds
FB_SILENT, FB_ACK, FB_NACK, FB_MISSING = 0, 1, 2, 3
# Feedback channel models
FM_IDEAL, FM_NOISY, FM_ERASURE, FM_DELETION = 0, 1, 2, 3
# Outcome kinds (indices into the outcome counters)
OUT_SILENT, OUT_SUCCESS, OUT_FAILURE = 0, 1, 2
# Benchmark protocol codes
PR_RR, PR_MAF, PR_ZW, PR_LZW, PR_GZW = 0, 1, 2, 3, 4
# Debug error codes
ERR_NONE, ERR_LOCKSTEP, ERR_THETA_PSI = 0, 1, 2

_FNV = np.uint64(1099511628211)
_FNV_OFFSET = np.uint64(14695981039346656037)


@njit(cache=True, inline="always")
def _round_half_away(x):
    if x >= 0.0:
        return int(math.floor(x + 0.5))
    return int(math.ceil(x - 0.5))


@njit(cache=True, inline="always")
def noisy_decode(m, n, w):
    """Decoded 0-based id of a 0-based id m under additive noise w."""
    return (_round_half_away(m + w)) % n


@njit(cache=True)
def _bt_transmit(psi_row, theta, self_i, k_budget, lnl, homog):
    """Drain-phase transmit rule: own top-rank belief clears the threshold.

    In exponent space the rule reads sum_{m != i} [psi_m - theta + 1]^+ < K
    for equal activation rates; the general case compares weighted log terms.
    """
    n = psi_row.shape[0]
    if homog:
        s = 0
        for m in range(n):
            if m == self_i:
                continue
            e = psi_row[m] - theta + 1
            if e > 0:
                s += e
                if s >= k_budget:
                    return False
        return True
    s = 0.0
    for m in range(n):
        if m == self_i:
            continue
        e = psi_row[m] - theta + 1
        if e > 0:
            s += e * lnl[m]
    return s > k_budget * lnl[self_i]


@njit(cache=True)
def _bt_update_view(psi_row, out_row, ack_id, k_budget, lnl, lam_cfg, homog, scr_i, scr_f):
    """One drain-step update of a full bound vector after a non-failure slot.

    Silent nodes keep the largest below-threshold age plus one elapsed slot;
    an acknowledged node resets to zero. `scr_i`/`scr_f` are (2, cap) scratch
    buffers holding the suffix count and sum tables.
    """
    n = psi_row.shape[0]
    h = 0
    for m in range(n):
        if psi_row[m] > h:
            h = psi_row[m]
    if h + 3 > scr_i.shape[1]:
        # Stalled configurations can grow the bounds without limit; fall
        # back to locally sized scratch rather than overrun the shared one.
        scr_i = np.zeros((2, h + 3), dtype=np.int64)
        scr_f = np.zeros((2, h + 3), dtype=np.float64)
    cnt_ge = scr_i[0]
    sum_ge = scr_i[1]
    cntw_ge = scr_f[0]
    sumw_ge = scr_f[1]
    for v in range(h + 3):
        cnt_ge[v] = 0
        sum_ge[v] = 0
        cntw_ge[v] = 0.0
        sumw_ge[v] = 0.0
    if homog:
        for m in range(n):
            cnt_ge[psi_row[m]] += 1
            sum_ge[psi_row[m]] += psi_row[m]
        for v in range(h - 1, -1, -1):
            cnt_ge[v] += cnt_ge[v + 1]
            sum_ge[v] += sum_ge[v + 1]
    else:
        for m in range(n):
            cntw_ge[psi_row[m]] += lnl[m]
            sumw_ge[psi_row[m]] += lnl[m] * psi_row[m]
        for v in range(h - 1, -1, -1):
            cntw_ge[v] += cntw_ge[v + 1]
            sumw_ge[v] += sumw_ge[v + 1]

    for m in range(n):
        if lam_cfg[m] == 0.0 or m == ack_id:
            out_row[m] = 0
            continue
        pm = psi_row[m]
        # qualifies(a): a silent node could still hold age a, i.e. its
        # top-rank belief at age a does NOT clear the threshold.
        if homog:
            # G(a) = sum_j max(0, psi_j - a + 1) via suffix sums.
            own0 = pm + 1
            g0 = sum_ge[0] + cnt_ge[0]
            if g0 - own0 < k_budget:
                out_row[m] = 0
                continue
            lo = 0
            hi = pm
            while lo < hi:
                mid = (lo + hi + 1) // 2
                g = sum_ge[mid] - (mid - 1) * cnt_ge[mid]
                own = pm - mid + 1
                if g - own >= k_budget:
                    lo = mid
                else:
                    hi = mid - 1
            out_row[m] = lo + 1
        else:
            thresh = k_budget * lnl[m]
            own0 = (pm + 1) * lnl[m]
            g0 = sumw_ge[0] + cntw_ge[0]
            if not (g0 - own0 <= thresh):
                out_row[m] = 0
                continue
            lo = 0
            hi = pm
            while lo < hi:
                mid = (lo + hi + 1) // 2
                g = sumw_ge[mid] - (mid - 1) * cntw_ge[mid]
                own = (pm - mid + 1) * lnl[m]
                if g - own <= thresh:
                    lo = mid
                else:
                    hi = mid - 1
            out_row[m] = lo + 1


@njit(cache=True)
def _bt_pvec_and_prior(l_active, lam_mean, eps_mean, k_budget, pvec_out, phi_out):
    """Per-round probabilities and collider prior for a drain-slot collision.

    The drain band is treated as fresh traffic: l_active contenders, each
    activating with probability 1-(1-lam)^(K/l_active).
    """
    n = pvec_out.shape[0]
    alpha = 1.0 - (1.0 - lam_mean) ** (k_budget / l_active)
    li = l_active if l_active >= 1 else 1
    for i in range(n):
        remaining = li - i
        if remaining <= 1:
            pvec_out[i] = 1.0
        else:
            w = binom_pmf_vec(remaining, alpha)
            w[0] = 0.0
            w[1] = w[1] * eps_mean
            pvec_out[i] = duration_root(w)
    w = binom_pmf_vec(li, alpha)
    w[0] = 0.0
    w[1] = w[1] * eps_mean
    total = 0.0
    for c in range(li + 1):
        total += w[c]
    for c in range(phi_out.shape[0]):
        phi_out[c] = 0.0
    if total > 0.0:
        for c in range(min(li, phi_out.shape[0] - 1) + 1):
            phi_out[c] = w[c] / total


@njit(cache=True)
def _resync(
    i, pb_phase, pb_maxpsi, did_tx_i, slot,
    phase, member, cr_round, cycle_start,
    psi, pre, snapshot, belief, phi0_static, p_static, pvec,
):
    """Adopt the gateway's piggybacked phase (and drain bound cap) on decode."""
    n = psi.shape[1]
    if phase[i] == pb_phase:
        if pb_phase == BT:
            mx = 0
            for m in range(n):
                if psi[i, m] > pb_maxpsi:
                    psi[i, m] = pb_maxpsi
                if psi[i, m] > mx:
                    mx = psi[i, m]
            if mx == 0:
                phase[i] = ZW
        return
    phase[i] = pb_phase
    if pb_phase == CR or pb_phase == CE:
        member[i] = did_tx_i
        cycle_start[i] = slot
        cr_round[i] = 0
        for m in range(n):
            pre[i, m] = psi[i, m]
            snapshot[i, m] = psi[i, m]
        for c in range(n + 1):
            belief[i, c] = phi0_static[c]
        for m in range(n):
            pvec[i, m] = p_static[m]
    elif pb_phase == BT:
        mx = 0
        for m in range(n):
            if psi[i, m] > pb_maxpsi:
                psi[i, m] = pb_maxpsi
            if psi[i, m] > mx:
                mx = psi[i, m]
        if mx == 0:
            phase[i] = ZW
    else:  # ZW
        for m in range(n):
            psi[i, m] = 0


@njit(cache=True)
def apply_feedback(
    nv, obs_kind, obs_id, did_tx_v, decoded, slot, do_resync,
    phase, member, cr_round, cycle_start,
    psi, pre, snapshot, delta_hat, pvec, belief, last_p,
    lam_cfg, lnl_cfg, homog, k_budget, p_static, phi0_static,
    lam_mean, eps_mean, is_plus, bt_adjust,
    scr_i, scr_f, new_row,
    pcache_ok, pcache, phicache,
):
    """End-of-slot transition for every view given its observed feedback.

    View nv-1 is the gateway reference and is processed first; with
    `do_resync` the other views then adopt its piggybacked phase and drain
    cap whenever their own observation was a decodable ACK/NACK.
    """
    n = psi.shape[1]
    ref = nv - 1
    pb_phase = 0
    pb_maxpsi = 0
    for v in range(nv - 1, -1, -1):
        kind = obs_kind[v]
        ack_id = obs_id[v]
        dtx = did_tx_v[v]
        for m in range(n):
            delta_hat[v, m] += 1
        if kind == FB_ACK and ack_id >= 0:
            delta_hat[v, ack_id] = 0

        ph = phase[v]

        if kind == FB_MISSING:
            # Erasure loss: hold the phase. Normal operation and contention
            # act as if the slot went their way; the drain applies a
            # silent-style step so the bound keeps moving until the next
            # decoded feedback.
            if ph == BT:
                _bt_update_view(
                    psi[v], new_row, -1, k_budget, lnl_cfg, lam_cfg, homog,
                    scr_i, scr_f,
                )
                mx = 0
                for m in range(n):
                    psi[v, m] = new_row[m]
                    if new_row[m] > mx:
                        mx = new_row[m]
                if mx == 0:
                    phase[v] = ZW
        elif kind == FB_NACK:
            if ph == CE:
                cr_round[v] += 1
                if is_plus:
                    belief_nack_ce(belief[v], eps_mean)
                phase[v] = CR
            elif ph == CR:
                if is_plus:
                    belief_nack_cr(belief[v], last_p[v], eps_mean)
            else:
                # ZW or BT: a failure opens a resolution cycle.
                for m in range(n):
                    pre[v, m] = psi[v, m]
                if ph == ZW:
                    for m in range(n):
                        snapshot[v, m] = 0
                else:
                    _bt_update_view(
                        psi[v], new_row, -1, k_budget, lnl_cfg, lam_cfg, homog,
                        scr_i, scr_f,
                    )
                    for m in range(n):
                        snapshot[v, m] = new_row[m]
                member[v] = dtx
                cycle_start[v] = slot
                cr_round[v] = 0
                for i in range(n):
                    pvec[v, i] = p_static[i]
                for c in range(n + 1):
                    belief[v, c] = phi0_static[c]
                if bt_adjust and ph == BT:
                    # Contender count: nodes whose threshold test could pass
                    # at their maximal feasible age. The collision set is a
                    # subset, so the last optimized round is a singleton.
                    l_active = 0
                    for m in range(n):
                        if lam_cfg[m] > 0.0 and _bt_transmit(
                            pre[v], pre[v, m], m, k_budget, lnl_cfg, homog
                        ):
                            l_active += 1
                    if l_active < 1:
                        l_active = 1
                    if pcache_ok[l_active] == 0:
                        _bt_pvec_and_prior(
                            l_active, lam_mean, eps_mean, k_budget,
                            pcache[l_active], phicache[l_active],
                        )
                        pcache_ok[l_active] = 1
                    for i in range(n):
                        pvec[v, i] = pcache[l_active, i]
                    if is_plus:
                        for c in range(n + 1):
                            belief[v, c] = phicache[l_active, c]
                phase[v] = CR
        elif kind == FB_ACK:
            if ph == CR:
                if is_plus:
                    belief_ack_cr(belief[v], last_p[v], eps_mean)
                if dtx == 1:
                    member[v] = 0
                phase[v] = CE
            elif ph == BT:
                _bt_update_view(
                    psi[v], new_row, ack_id, k_budget, lnl_cfg, lam_cfg, homog,
                    scr_i, scr_f,
                )
                mx = 0
                for m in range(n):
                    psi[v, m] = new_row[m]
                    if new_row[m] > mx:
                        mx = new_row[m]
                if mx == 0:
                    phase[v] = ZW
        else:  # FB_SILENT
            if ph == CR:
                if is_plus:
                    belief_silent_cr(belief[v], last_p[v])
            elif ph == BT:
                _bt_update_view(
                    psi[v], new_row, -1, k_budget, lnl_cfg, lam_cfg, homog,
                    scr_i, scr_f,
                )
                mx = 0
                for m in range(n):
                    psi[v, m] = new_row[m]
                    if new_row[m] > mx:
                        mx = new_row[m]
                if mx == 0:
                    phase[v] = ZW

        if kind != FB_MISSING:
            cycle_done = ph == CE and kind != FB_NACK
            if (phase[v] == CR or phase[v] == CE) and not cycle_done:
                # Live bound while a cycle runs: any node might be an
                # unresolved member whose anomaly predates the cycle, so the
                # pre-collision bound plus elapsed slots caps everyone until
                # the set provably empties.
                elapsed = slot - cycle_start[v]
                for m in range(n):
                    b = pre[v, m] + 1 + elapsed
                    if delta_hat[v, m] < b:
                        b = delta_hat[v, m]
                    if lam_cfg[m] == 0.0:
                        b = 0
                    psi[v, m] = b
            if cycle_done:
                # Cycle over: enter the drain with the bound rebuilt from
                # public slot counts.
                kdur = slot - cycle_start[v]
                mx = 0
                for m in range(n):
                    b = snapshot[v, m] + kdur
                    if delta_hat[v, m] < b:
                        b = delta_hat[v, m]
                    if lam_cfg[m] == 0.0:
                        b = 0
                    psi[v, m] = b
                    if b > mx:
                        mx = b
                cr_round[v] = 0
                phase[v] = BT if mx > 0 else ZW

        if v == ref:
            pb_phase = phase[ref]
            pb_maxpsi = 0
            for m in range(n):
                if psi[ref, m] > pb_maxpsi:
                    pb_maxpsi = psi[ref, m]
        elif do_resync and decoded[v] == 1 and (kind == FB_ACK or kind == FB_NACK):
            if phase[v] != pb_phase:
                _resync(
                    v, pb_phase, pb_maxpsi, dtx, slot,
                    phase, member, cr_round, cycle_start,
                    psi, pre, snapshot, belief, phi0_static, p_static, pvec,
                )
            elif pb_phase == BT:
                mx = 0
                for m in range(n):
                    if psi[v, m] > pb_maxpsi:
                        psi[v, m] = pb_maxpsi
                    if psi[v, m] > mx:
                        mx = psi[v, m]
                if mx == 0:
                    phase[v] = ZW


@njit(cache=True)
def delta_episode(
    n,
    slots,
    seed,
    lam_true,
    eps_up,
    lam_cfg,
    lnl_cfg,
    homog,
    k_budget,
    p_static,
    phi0_static,
    lam_mean,
    eps_mean,
    is_plus,
    bt_adjust,
    fm_kind,
    sigma_f,
    eps_f,
    omega_f,
    thresholds,
    debug,
):
    """Run one episode of the knowledge-driven protocol.

    Returns violation counts per threshold (pooled and per node), age sums,
    outcome and phase counters, the activation count, and a debug error
    triple (code, slot, node); code 0 means no invariant was violated.
    """
    nt = thresholds.shape[0]
    nv = n + 1  # views: one per node plus the gateway reference
    ref = n

    streams = make_streams(seed, 3 * n + 1)
    chan = 3 * n

    # Private ground truth
    x = np.zeros(n, dtype=np.int8)
    theta = np.zeros(n, dtype=np.int64)
    delta_true = np.zeros(n, dtype=np.int64)

    # Per-view protocol state
    phase = np.zeros(nv, dtype=np.int8)
    member = np.zeros(nv, dtype=np.uint8)
    cr_round = np.zeros(nv, dtype=np.int64)
    cycle_start = np.zeros(nv, dtype=np.int64)
    psi = np.zeros((nv, n), dtype=np.int64)
    pre = np.zeros((nv, n), dtype=np.int64)
    snapshot = np.zeros((nv, n), dtype=np.int64)
    delta_hat = np.zeros((nv, n), dtype=np.int64)
    pvec = np.zeros((nv, n), dtype=np.float64)
    belief = np.zeros((nv, n + 1), dtype=np.float64)
    last_p = np.ones(nv, dtype=np.float64)
    for v in range(nv):
        for i in range(n):
            pvec[v, i] = p_static[i]
        for c in range(n + 1):
            belief[v, c] = phi0_static[c]

    # Per-slot observation buffers (index nv-1 is the reference)
    obs_kind = np.zeros(nv, dtype=np.int8)
    obs_id = np.full(nv, -1, dtype=np.int64)
    did_tx_v = np.zeros(nv, dtype=np.uint8)
    decoded = np.ones(nv, dtype=np.uint8)

    # Scratch for the drain-step suffix sums
    scr_i = np.zeros((2, 1024), dtype=np.int64)
    scr_f = np.zeros((2, 1024), dtype=np.float64)
    new_row = np.zeros(n, dtype=np.int64)

    # Adjusted contention vectors depend only on the contender count within
    # an episode, so they are computed once per count.
    pcache_ok = np.zeros(n + 1, dtype=np.uint8)
    pcache = np.zeros((n + 1, n), dtype=np.float64)
    phicache = np.zeros((n + 1, n + 1), dtype=np.float64)

    # Metrics
    viol = np.zeros(nt, dtype=np.int64)
    viol_pn = np.zeros((nt, n), dtype=np.int64)
    aoii_sum = 0.0
    aoi_sum = 0.0
    out_counts = np.zeros(3, dtype=np.int64)
    ph_counts = np.zeros(4, dtype=np.int64)
    activations = 0
    err_code = ERR_NONE
    err_slot = -1
    err_node = -1

    for t in range(1, slots + 1):
        # 1. anomalies
        for i in range(n):
            if x[i] == 0 and rand_u01(streams, i) <= lam_true[i]:
                x[i] = 1
                activations += 1

        ph_counts[phase[ref]] += 1

        # 2. transmission decisions
        if is_plus:
            prev_v = -1
            for v in range(nv):
                if phase[v] != CR:
                    continue
                same = prev_v >= 0
                if same:
                    for c in range(n + 1):
                        if belief[v, c] != belief[prev_v, c]:
                            same = False
                            break
                if same:
                    last_p[v] = last_p[prev_v]
                else:
                    last_p[v] = duration_root(belief[v])
                prev_v = v

        ntx = 0
        winner = -1
        for i in range(n):
            tx = False
            if x[i] == 1:
                ph = phase[i]
                if ph == ZW:
                    tx = True
                elif ph == CR:
                    if member[i] == 1:
                        if is_plus:
                            p = last_p[i]
                        else:
                            r = cr_round[i]
                            if r > n - 1:
                                r = n - 1
                            p = pvec[i, r]
                        tx = rand_u01(streams, n + i) <= p
                elif ph == CE:
                    tx = member[i] == 1
                else:
                    tx = _bt_transmit(psi[i], theta[i], i, k_budget, lnl_cfg, homog)
            did_tx_v[i] = 1 if tx else 0
            if tx:
                ntx += 1
                winner = i

        # 3. uplink outcome
        if ntx == 0:
            kind_true = FB_SILENT
            winner = -1
            out_counts[OUT_SILENT] += 1
        elif ntx == 1:
            if rand_u01(streams, chan) <= eps_up[winner]:
                kind_true = FB_NACK
                winner = -1
                out_counts[OUT_FAILURE] += 1
            else:
                kind_true = FB_ACK
                out_counts[OUT_SUCCESS] += 1
        else:
            kind_true = FB_NACK
            winner = -1
            out_counts[OUT_FAILURE] += 1

        # 4. per-view observations (reference sees the truth)
        obs_kind[ref] = kind_true
        obs_id[ref] = winner
        did_tx_v[ref] = 0
        decoded[ref] = 1
        for i in range(n):
            okind = kind_true
            oid = winner
            dec = 1
            if fm_kind == FM_NOISY:
                if kind_true == FB_ACK:
                    if did_tx_v[i] == 1:
                        oid = i
                    else:
                        w = rand_normal(streams, 2 * n + i, sigma_f)
                        oid = noisy_decode(winner, n, w)
            elif fm_kind == FM_ERASURE:
                if kind_true != FB_SILENT:
                    if rand_u01(streams, 2 * n + i) <= eps_f:
                        okind = FB_MISSING
                        oid = -1
                        dec = 0
            elif fm_kind == FM_DELETION:
                if kind_true != FB_SILENT:
                    if rand_u01(streams, 2 * n + i) <= omega_f:
                        okind = FB_SILENT
                        oid = -1
                        dec = 0
            obs_kind[i] = okind
            obs_id[i] = oid
            decoded[i] = dec

        # 5. public bookkeeping for every view
        apply_feedback(
            nv, obs_kind, obs_id, did_tx_v, decoded, t, True,
            phase, member, cr_round, cycle_start,
            psi, pre, snapshot, delta_hat, pvec, belief, last_p,
            lam_cfg, lnl_cfg, homog, k_budget, p_static, phi0_static,
            lam_mean, eps_mean, is_plus, bt_adjust,
            scr_i, scr_f, new_row,
            pcache_ok, pcache, phicache,
        )

        # 6. ages and metrics
        for i in range(n):
            if kind_true == FB_ACK and winner == i:
                x[i] = 0
                theta[i] = 0
                delta_true[i] = 0
            else:
                delta_true[i] += 1
                if x[i] == 1:
                    theta[i] += 1
            aoii_sum += theta[i]
            aoi_sum += delta_true[i]
            for j in range(nt):
                if theta[i] > thresholds[j]:
                    viol[j] += 1
                    viol_pn[j, i] += 1

        # 7. debug invariants (ideal feedback only)
        if debug and fm_kind == FM_IDEAL and err_code == ERR_NONE:
            for i in range(n):
                if phase[i] != phase[ref] or cr_round[i] != cr_round[ref]:
                    err_code = ERR_LOCKSTEP
                    err_slot = t
                    err_node = i
                    break
                for m in range(n):
                    if (
                        psi[i, m] != psi[ref, m]
                        or delta_hat[i, m] != delta_hat[ref, m]
                    ):
                        err_code = ERR_LOCKSTEP
                        err_slot = t
                        err_node = i
                        break
                if err_code != ERR_NONE:
                    break
                if theta[i] > psi[i, i]:
                    err_code = ERR_THETA_PSI
                    err_slot = t
                    err_node = i
                    break
            if err_code != ERR_NONE:
                break

    return (
        viol, viol_pn, aoii_sum, aoi_sum, out_counts, ph_counts,
        activations, err_code, err_slot, err_node,
    )


@njit(cache=True)
def baseline_episode(
    proto,
    n,
    slots,
    seed,
    lam_true,
    eps_up,
    p1,
    p2,
    fm_kind,
    sigma_f,
    eps_f,
    omega_f,
    thresholds,
):
    """Run one episode of a benchmark protocol (RR/MAF/ZW/LZW/GZW)."""
    nt = thresholds.shape[0]
    streams = make_streams(seed, 3 * n + 1)
    chan = 3 * n

    x = np.zeros(n, dtype=np.int8)
    theta = np.zeros(n, dtype=np.int64)
    delta_true = np.zeros(n, dtype=np.int64)
    failed_local = np.zeros(n, dtype=np.uint8)
    backoff_global = np.zeros(n, dtype=np.uint8)
    gw_aoi = np.zeros(n, dtype=np.int64)
    did_tx = np.zeros(n, dtype=np.uint8)

    viol = np.zeros(nt, dtype=np.int64)
    viol_pn = np.zeros((nt, n), dtype=np.int64)
    aoii_sum = 0.0
    aoi_sum = 0.0
    out_counts = np.zeros(3, dtype=np.int64)
    activations = 0
    poll_hash = _FNV_OFFSET

    poll = 0  # next polled node for the scheduled protocols

    for t in range(1, slots + 1):
        for i in range(n):
            if x[i] == 0 and rand_u01(streams, i) <= lam_true[i]:
                x[i] = 1
                activations += 1
                failed_local[i] = 0

        ntx = 0
        winner = -1
        if proto == PR_RR:
            poll = (t - 1) % n
            poll_hash = (poll_hash * _FNV) ^ np.uint64(poll + 1)
            if x[poll] == 1:
                ntx = 1
                winner = poll
        elif proto == PR_MAF:
            poll_hash = (poll_hash * _FNV) ^ np.uint64(poll + 1)
            if fm_kind == FM_NOISY:
                for i in range(n):
                    w = rand_normal(streams, 2 * n + i, sigma_f)
                    if noisy_decode(poll, n, w) == i:
                        did_tx[i] = 1
                        ntx += 1
                        winner = i
                    else:
                        did_tx[i] = 0
            else:
                heard = True
                if fm_kind == FM_ERASURE:
                    heard = rand_u01(streams, 2 * n + poll) > eps_f
                elif fm_kind == FM_DELETION:
                    heard = rand_u01(streams, 2 * n + poll) > omega_f
                if heard:
                    ntx = 1
                    winner = poll
        else:
            for i in range(n):
                tx = False
                if x[i] == 1:
                    if proto == PR_ZW:
                        p = p1
                    elif proto == PR_LZW:
                        p = p2 if failed_local[i] == 1 else p1
                    else:
                        p = p2 if backoff_global[i] == 1 else p1
                    tx = rand_u01(streams, n + i) <= p
                did_tx[i] = 1 if tx else 0
                if tx:
                    ntx += 1
                    winner = i

        if ntx == 0:
            kind = FB_SILENT
            winner = -1
            out_counts[OUT_SILENT] += 1
        elif ntx == 1:
            if rand_u01(streams, chan) <= eps_up[winner]:
                kind = FB_NACK
                winner = -1
                out_counts[OUT_FAILURE] += 1
            else:
                kind = FB_ACK
                out_counts[OUT_SUCCESS] += 1
        else:
            kind = FB_NACK
            winner = -1
            out_counts[OUT_FAILURE] += 1

        # protocol-side reactions to the downlink
        if proto == PR_MAF:
            for i in range(n):
                gw_aoi[i] += 1
            if kind == FB_ACK:
                gw_aoi[winner] = 0
                best = 0
                for i in range(1, n):
                    if gw_aoi[i] > gw_aoi[best]:
                        best = i
                poll = best
            # any non-success: retransmit immediately (same target)
        elif proto == PR_LZW:
            for i in range(n):
                if did_tx[i] == 1 and not (kind == FB_ACK and winner == i):
                    failed_local[i] = 1
        elif proto == PR_GZW:
            for i in range(n):
                okind = kind
                if fm_kind == FM_ERASURE and kind != FB_SILENT:
                    if rand_u01(streams, 2 * n + i) <= eps_f:
                        okind = FB_MISSING
                elif fm_kind == FM_DELETION and kind != FB_SILENT:
                    if rand_u01(streams, 2 * n + i) <= omega_f:
                        okind = FB_SILENT
                if okind == FB_NACK:
                    backoff_global[i] = 1
                elif okind == FB_ACK:
                    backoff_global[i] = 0

        for i in range(n):
            if kind == FB_ACK and winner == i:
                x[i] = 0
                theta[i] = 0
                delta_true[i] = 0
            else:
                delta_true[i] += 1
                if x[i] == 1:
                    theta[i] += 1
            aoii_sum += theta[i]
            aoi_sum += delta_true[i]
            for j in range(nt):
                if theta[i] > thresholds[j]:
                    viol[j] += 1
                    viol_pn[j, i] += 1

    return (
        viol, viol_pn, aoii_sum, aoi_sum, out_counts,
        activations, poll_hash,
    )


@njit(cache=True)
def grid_eval(
    proto, p1s, p2s, n, slots, seed, lam_true, eps_up, thresholds,
):
    """Violation fractions for a batch of (p1, p2) points under ideal feedback.

    Every point replays the same random streams (common random numbers).
    """
    npts = p1s.shape[0]
    nt = thresholds.shape[0]
    out = np.zeros((npts, nt))
    for g in range(npts):
        res = baseline_episode(
            proto, n, slots, seed, lam_true, eps_up,
            p1s[g], p2s[g], FM_IDEAL, 0.0, 0.0, 0.0, thresholds,
        )
        for j in range(nt):
            out[g, j] = res[0][j] / (slots * n)
    return out


@njit(cache=True)
def cycle_mc(c0, pvec, eps, n_cycles, seed):
    """Protocol-level Monte Carlo of resolution cycles: slot counts to empty.

    Members retransmit with the round probability until an acknowledgment,
    then the survivors confirm at probability one; silence or a success in a
    confirmation slot ends the cycle.
    """
    streams = make_streams(seed, 1)
    n = pvec.shape[0]
    out = np.zeros(n_cycles, dtype=np.int64)
    for it in range(n_cycles):
        c = c0
        rnd = 0
        slots = 0
        phase_cr = True
        while True:
            slots += 1
            if phase_cr:
                ntx = 0
                for _ in range(c):
                    r = rnd if rnd < n else n - 1
                    if rand_u01(streams, 0) <= pvec[r]:
                        ntx += 1
                if ntx == 1 and rand_u01(streams, 0) > eps:
                    c -= 1
                    phase_cr = False
            else:
                if c == 0:
                    break
                if c == 1:
                    if rand_u01(streams, 0) > eps:
                        break
                    rnd += 1
                    phase_cr = True
                else:
                    rnd += 1
                    phase_cr = True
        out[it] = slots
    return out


@njit(cache=True)
def zw_conditioned_cycle_mc(n, lam, eps, pvec, n_cycles, seed):
    """Cycle lengths conditioned on fresh-traffic failures.

    Draws fresh-anomaly counts slot by slot until one fails (a collision or
    a lone erased transmission), then simulates that cycle.
    """
    streams = make_streams(seed, 1)
    np_len = pvec.shape[0]
    out = np.zeros(n_cycles, dtype=np.int64)
    for it in range(n_cycles):
        c0 = 0
        while True:
            ntx = 0
            for _ in range(n):
                if rand_u01(streams, 0) <= lam:
                    ntx += 1
            if ntx >= 2:
                c0 = ntx
                break
            if ntx == 1 and rand_u01(streams, 0) <= eps:
                c0 = 1
                break
        c = c0
        rnd = 0
        slots = 0
        phase_cr = True
        while True:
            slots += 1
            if phase_cr:
                ntx = 0
                for _ in range(c):
                    r = rnd if rnd < np_len else np_len - 1
                    if rand_u01(streams, 0) <= pvec[r]:
                        ntx += 1
                if ntx == 1 and rand_u01(streams, 0) > eps:
                    c -= 1
                    phase_cr = False
            else:
                if c == 0:
                    break
                if c == 1:
                    if rand_u01(streams, 0) > eps:
                        break
                    rnd += 1
                    phase_cr = True
                else:
                    rnd += 1
                    phase_cr = True
        out[it] = slots
    return out


@njit(cache=True)
def bt_slot_mc(l_active, alpha, eps, n_trials, seed):
    """Failure frequency of one drain slot with Bernoulli(alpha) contenders."""
    streams = make_streams(seed, 1)
    fails = 0
    for _ in range(n_trials):
        ntx = 0
        for _ in range(l_active):
            if rand_u01(streams, 0) <= alpha:
                ntx += 1
        if ntx >= 2:
            fails += 1
        elif ntx == 1 and rand_u01(streams, 0) <= eps:
            fails += 1
    return fails
