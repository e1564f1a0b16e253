"""Approximate discrete-time semi-Markov model of the whole system.

States are normal operation (ZW), a resolution cycle opened at peak bound
psi (CR(psi)), and the threshold-governed drain at bound psi (BT(psi)). The
model is used to pick the slot budget K by maximizing the long-run fraction
of time spent in normal operation. Symmetric parameters are assumed
throughout this module (scalar lambda and epsilon).
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np

from ._opt import binom_pmf_vec
from .cr import cycle_mixture_pmf_table, cycle_pmf_table, optimal_p_static

PESSIMISTIC = "pessimistic"
OPTIMISTIC = "optimistic"


def k_from_threshold(f: float, lam: float) -> float:
    """Slot budget equivalent to belief threshold f: K = log f / log(1-lam)."""
    if not (0.0 < f < 1.0):
        raise ValueError("threshold must lie in (0, 1)")
    if not (0.0 < lam < 1.0):
        raise ValueError("lambda must lie in (0, 1)")
    return math.log(f) / math.log(1.0 - lam)


def collision_prob_bt(k: float, n_active: float, lam: float, eps: float) -> float:
    """Per-slot failure probability of a drain step with n_active contenders.

    Each contender transmits with probability alpha = 1-(1-lam)^(k/n_active);
    the slot fails unless it is silent or a lone transmission survives.
    """
    if n_active < 1:
        raise ValueError("need at least one active node")
    alpha = 1.0 - (1.0 - lam) ** (k / n_active)
    single = n_active * alpha * (1.0 - alpha) ** (n_active - 1)
    return 1.0 - (1.0 - lam) ** k - (1.0 - eps) * single


def zw_failure_prob(n: int, lam: float, eps: float) -> float:
    """Exact per-slot failure probability under fresh traffic only."""
    return (
        1.0
        - (1.0 - lam) ** n
        - (1.0 - eps) * n * lam * (1.0 - lam) ** (n - 1)
    )


def active_nodes(psi: int, variant: str, n: int, expected_colliders: float = 0.0) -> float:
    """Contender-count estimate for a drain state at bound psi.

    The pessimistic variant counts every node; the optimistic one removes the
    expected number of just-resolved colliders, which cannot be contending.
    """
    if variant == PESSIMISTIC:
        return float(n)
    if variant == OPTIMISTIC:
        return max(1.0, float(n) - expected_colliders)
    raise ValueError(f"unknown variant {variant!r}")


def expected_colliders_given_length(n: int, lam: float, eps: float, p, tmax: int):
    """E[collider count | cycle length] for lengths 0..tmax under fresh traffic."""
    from ._opt import zw_collider_weights

    w = zw_collider_weights(n, lam, eps)
    num = np.zeros(tmax + 1)
    den = np.zeros(tmax + 1)
    for c in range(1, n + 1):
        if w[c] > 0.0:
            pmf = cycle_pmf_table(c, np.asarray(p, dtype=np.float64), eps, tmax)
            num += c * w[c] * pmf
            den += w[c] * pmf
    out = np.zeros(tmax + 1)
    nz = den > 0
    out[nz] = num[nz] / den[nz]
    return out


@dataclass
class SemiMarkovModel:
    n: int
    lam: float
    eps: float
    k: int
    psi_max: int
    variant: str
    labels: list
    M: np.ndarray
    T: np.ndarray

    def index(self, label) -> int:
        return self.labels.index(label)


def _bt_collider_weights(n_active_int: int, alpha: float, eps: float) -> np.ndarray:
    w = binom_pmf_vec(n_active_int, alpha)
    w[0] = 0.0
    if n_active_int >= 1:
        w[1] = w[1] * eps
    return w


def build_model(
    n: int,
    lam: float,
    eps: float,
    k: int,
    psi_max: int | None = None,
    variant: str = PESSIMISTIC,
    bt_p_adjust: bool = False,
    check_stability: bool = False,
) -> SemiMarkovModel:
    """Assemble the transition matrix M and sojourn matrix T.

    Cycle-length masses beyond the truncation bound are lumped into BT(psi_max)
    with a pessimistic sojourn of psi_max slots. Drain transitions are
    enumerated forward from each BT source state.
    """
    if psi_max is None:
        psi_max = 8 * n
    if psi_max < 3:
        raise ValueError("truncation bound too small")
    labels = (
        ["ZW"]
        + [("CR", s) for s in range(psi_max + 1)]
        + [("BT", s) for s in range(1, psi_max + 1)]
    )
    idx = {lab: i for i, lab in enumerate(labels)}
    size = len(labels)
    M = np.zeros((size, size))
    T = np.ones((size, size))

    p_static = optimal_p_static(n, lam, eps)
    xi_zw = zw_failure_prob(n, lam, eps)
    M[idx["ZW"], idx[("CR", 0)]] = 1.0
    T[idx["ZW"], idx[("CR", 0)]] = np.inf if xi_zw == 0.0 else 1.0 / xi_zw

    ecol = (
        expected_colliders_given_length(n, lam, eps, p_static, psi_max)
        if variant == OPTIMISTIC
        else None
    )

    def state_l(psi: int) -> float:
        if variant == PESSIMISTIC or psi <= 0 or psi > psi_max:
            return float(n)
        return active_nodes(psi, variant, n, ecol[psi])

    # Cycle-length pmf for cycles opened at bound psi'; cached per contender
    # profile since the pessimistic variant shares one profile for all states.
    zeta_cache: dict = {}

    def zeta(psi_src: int) -> np.ndarray:
        if psi_src == 0:
            key = ("zw",)
            if key not in zeta_cache:
                from ._opt import zw_collider_weights

                w = zw_collider_weights(n, lam, eps)
                zeta_cache[key] = cycle_mixture_pmf_table(w, p_static, eps, psi_max)
            return zeta_cache[key]
        l_real = state_l(psi_src)
        l_int = max(1, int(round(l_real)))
        alpha = 1.0 - (1.0 - lam) ** (k / l_real)
        key = (l_int, round(alpha, 9))
        if key not in zeta_cache:
            w = _bt_collider_weights(l_int, alpha, eps)
            p_use = optimal_p_static(l_int, alpha, eps) if bt_p_adjust else p_static
            if p_use.shape[0] < l_int:
                p_use = np.concatenate([p_use, np.ones(l_int - p_use.shape[0])])
            zeta_cache[key] = cycle_mixture_pmf_table(w, p_use, eps, psi_max)
        return zeta_cache[key]

    # CR(psi') rows: the cycle ends after ell slots at bound psi' + ell.
    for psi_src in range(psi_max + 1):
        row = idx[("CR", psi_src)]
        z = zeta(psi_src)
        acc = 0.0
        for ell in range(2, psi_max - psi_src):
            dest = idx[("BT", psi_src + ell)]
            M[row, dest] = z[ell]
            T[row, dest] = ell
            acc += z[ell]
        dest = idx[("BT", psi_max)]
        M[row, dest] += 1.0 - acc
        T[row, dest] = psi_max

    # BT(psi) rows: one slot per step; a collision opens a cycle at the
    # already-drained bound, otherwise the bound drops by floor(K/L) - 1.
    for psi in range(1, psi_max + 1):
        row = idx[("BT", psi)]
        l_real = state_l(psi)
        xi = collision_prob_bt(k, l_real, lam, eps)
        d = math.floor(k / l_real) - 1
        drained = psi - d
        cr_dest = min(max(drained, 0), psi_max)
        M[row, idx[("CR", cr_dest)]] += xi
        if drained <= 0:
            M[row, idx["ZW"]] += 1.0 - xi
        else:
            M[row, idx[("BT", min(drained, psi_max))]] += 1.0 - xi

    model = SemiMarkovModel(
        n=n, lam=lam, eps=eps, k=k, psi_max=psi_max, variant=variant,
        labels=labels, M=M, T=T,
    )
    if check_stability and not is_stable(model):
        warnings.warn(
            f"steady mass at CR({psi_max}) does not decrease when the bound is "
            "doubled: the system looks unstable at these parameters",
            RuntimeWarning,
        )
    return model


def _reachable_from(M: np.ndarray, start: int) -> np.ndarray:
    seen = np.zeros(M.shape[0], dtype=bool)
    stack = [start]
    seen[start] = True
    while stack:
        s = stack.pop()
        for d in np.nonzero(M[s] > 0)[0]:
            if not seen[d]:
                seen[d] = True
                stack.append(d)
    return seen


def steady_state(model: SemiMarkovModel):
    """Stationary distribution of the jump chain and its sojourn-weighted form.

    Returns (alpha, pi) over model.labels. States unreachable from ZW carry
    zero mass.
    """
    size = model.M.shape[0]
    zw = model.labels.index("ZW")
    mean_sojourn = (model.M * model.T).sum(axis=1)
    if not np.isfinite(mean_sojourn[zw]):
        # No traffic: the system never leaves normal operation.
        alpha = np.zeros(size)
        pi = np.zeros(size)
        alpha[zw] = 1.0
        pi[zw] = 1.0
        return alpha, pi

    reach = _reachable_from(model.M, zw)
    sub = model.M[np.ix_(reach, reach)]
    from scipy.linalg import null_space

    ns = null_space(sub.T - np.eye(sub.shape[0]), rcond=1e-12)
    if ns.shape[1] == 0:
        raise RuntimeError("stationary solve failed: empty null space")
    vec = ns[:, 0]
    if vec.sum() < 0:
        vec = -vec
    vec = np.clip(vec, 0.0, None)
    total = vec.sum()
    if total <= 0:
        raise RuntimeError("stationary solve failed: degenerate eigenvector")
    alpha = np.zeros(size)
    alpha[np.nonzero(reach)[0]] = vec / total

    weighted = alpha * mean_sojourn
    pi = weighted / weighted.sum()
    return alpha, pi


def pi_zw(model: SemiMarkovModel) -> float:
    _, pi = steady_state(model)
    return float(pi[model.labels.index("ZW")])


def is_stable(model: SemiMarkovModel) -> bool:
    """Steady mass at the truncation boundary must shrink as the bound grows.

    The boundary pair CR(psi_max)/BT(psi_max) absorbs the lumped cycle-length
    tail; in an unstable system it keeps its mass when psi_max is doubled.
    """
    doubled = build_model(
        model.n, model.lam, model.eps, model.k,
        psi_max=2 * model.psi_max, variant=model.variant,
    )

    def boundary_mass(m: SemiMarkovModel) -> float:
        _, pi = steady_state(m)
        cut = int(math.ceil(0.9 * m.psi_max))
        total = 0.0
        for psi in range(cut, m.psi_max + 1):
            total += pi[m.labels.index(("CR", psi))]
            if psi >= 1:
                total += pi[m.labels.index(("BT", psi))]
        return float(total)

    m1 = boundary_mass(model)
    m2 = boundary_mass(doubled)
    return m1 < 1e-6 or m2 < 0.5 * m1


def optimize_k(
    n: int,
    lam: float,
    eps: float,
    psi_max: int | None = None,
    variant: str = PESSIMISTIC,
    k_range=None,
    bt_p_adjust: bool = False,
) -> int:
    """Slot budget maximizing the modeled time share in normal operation.

    Ties break toward the smaller budget.
    """
    if k_range is None:
        k_range = range(2, 6 * n + 1)
    best_k = None
    best_val = -1.0
    for k in k_range:
        if k < 2:
            raise ValueError("slot budgets below 2 are not meaningful")
        model = build_model(
            n, lam, eps, k, psi_max=psi_max, variant=variant,
            bt_p_adjust=bt_p_adjust,
        )
        val = pi_zw(model)
        if val > best_val + 1e-15:
            best_val = val
            best_k = k
    return best_k


def fixed_reference_k(n: int) -> int:
    """Parameter-free fallback budget: ceil(2.5 N)."""
    return math.ceil(2.5 * n)


def export_pi_table(path, rows) -> None:
    """Write (K, pi_zw) pairs as plain-text columns."""
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("k pi_zw\n")
        for k, val in rows:
            fh.write(f"{int(k)} {val!r}\n")
