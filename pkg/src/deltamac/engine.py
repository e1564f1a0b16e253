"""Slot-level Monte Carlo driver: configuration, episode runs, metrics.

One episode is one logical thread; sweeps fan episodes out across worker
processes and merge the resulting ledgers by pure reduction. Identical
(config, seed) pairs produce bit-identical ledgers.
"""

from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np

from . import _kernels as K
from .channel import FeedbackModel, FeedbackModelKind, Phase
from .cr import collider_count_pmf_zw, optimal_p_static
from .domain import SystemParams

PROTOCOLS = ("delta", "delta+", "rr", "maf", "zw", "lzw", "gzw")
DELTA_PROTOCOLS = ("delta", "delta+")


class SimulationInvariantError(AssertionError):
    """A debug invariant failed during an episode (protocol bug surface)."""

    def __init__(self, code: int, slot: int, node: int):
        self.code = code
        self.slot = slot
        self.node = node
        name = "lock-step agreement" if code == K.ERR_LOCKSTEP else "theta <= psi"
        super().__init__(f"{name} violated at slot {slot} by node {node}")


@dataclass(frozen=True)
class DeltaConfig:
    """Protocol settings: slot budget, contention vector, variant switches.

    `bt_p_adjust` re-optimizes the contention vector when a drain-phase
    collision opens a cycle, treating the drain band as fresh traffic; it is
    on by default and can be disabled for comparison.
    """

    k_budget: int | None = None  # None: ceil(2.5 N)
    plus: bool = False
    bt_p_adjust: bool = True
    p_vector: np.ndarray | None = None  # None: optimized from (N, mean lam, mean eps)


@dataclass(frozen=True)
class BaselineConfig:
    kind: str = "zw"
    p1: float = 1.0
    p2: float = 1.0

    def __post_init__(self):
        if self.kind not in ("rr", "maf", "zw", "lzw", "gzw"):
            raise ValueError(f"unknown baseline {self.kind!r}")
        if not (0.0 < self.p1 <= 1.0 and 0.0 < self.p2 <= 1.0):
            raise ValueError("transmission probabilities must lie in (0, 1]")


@dataclass(frozen=True)
class EpisodeConfig:
    params: SystemParams
    protocol: str = "delta"
    delta: DeltaConfig = field(default_factory=DeltaConfig)
    baseline: BaselineConfig | None = None
    feedback: FeedbackModel = field(default_factory=FeedbackModel.ideal)
    slots: int = 10**6
    seed: int = 12345
    thresholds: tuple = (0, 5)
    debug_assertions: bool = False
    cfg_lam: np.ndarray | None = None  # protocol's assumed activation vector

    def __post_init__(self):
        if self.slots < 1:
            raise ValueError("need at least one slot")
        if not self.thresholds:
            raise ValueError("need at least one violation threshold")
        if self.protocol not in PROTOCOLS:
            raise ValueError(f"unknown protocol {self.protocol!r}")
        if self.protocol not in DELTA_PROTOCOLS and self.baseline is None:
            object.__setattr__(
                self, "baseline", BaselineConfig(kind=self.protocol)
            )


@dataclass
class MetricsLedger:
    protocol: str
    slots: int
    n: int
    seed: int
    violation: dict
    violation_per_node: dict
    mean_aoii: float
    mean_aoi: float
    collisions: int
    successes: int
    silent: int
    activations: int
    phase_occupancy: dict = field(default_factory=dict)
    psi_zw_fraction: float | None = None
    poll_hash: int | None = None

    def as_row(self) -> dict:
        row = {
            "protocol": self.protocol,
            "slots": self.slots,
            "seed": self.seed,
            "mean_aoii": self.mean_aoii,
            "mean_aoi": self.mean_aoi,
            "pi_zw": self.psi_zw_fraction if self.psi_zw_fraction is not None else "",
        }
        for thr, v in self.violation.items():
            row[f"v_theta{thr}"] = v
        return row


def delta_runtime_args(config: EpisodeConfig):
    """Resolve the protocol's configured vectors for the kernel call."""
    params = config.params
    n = params.n
    cfg_lam = (
        np.asarray(config.cfg_lam, dtype=np.float64)
        if config.cfg_lam is not None
        else params.lam.copy()
    )
    lam_mean = float(cfg_lam.mean())
    eps_mean = float(params.eps.mean())
    dc = config.delta
    k_budget = dc.k_budget if dc.k_budget is not None else math.ceil(2.5 * n)
    if dc.p_vector is not None:
        p_static = np.asarray(dc.p_vector, dtype=np.float64)
        if p_static.shape != (n,):
            raise ValueError("p vector must have one entry per contention round")
    else:
        p_static = optimal_p_static(n, lam_mean, eps_mean)
    mass, p_f = collider_count_pmf_zw(n, lam_mean, eps_mean)
    phi0 = mass / p_f if p_f > 0 else np.zeros(n + 1)
    lnl = np.log1p(-cfg_lam)
    homog = bool(np.all(cfg_lam == cfg_lam[0]))
    return cfg_lam, lnl, homog, int(k_budget), p_static, phi0, lam_mean, eps_mean


def run_episode(config: EpisodeConfig) -> MetricsLedger:
    """Run one seeded episode and collect its metrics ledger."""
    params = config.params
    n = params.n
    thresholds = np.array(sorted(config.thresholds), dtype=np.int64)
    fb = config.feedback

    if config.protocol in DELTA_PROTOCOLS:
        cfg_lam, lnl, homog, k_budget, p_static, phi0, lam_mean, eps_mean = (
            delta_runtime_args(config)
        )
        (
            viol, viol_pn, aoii_sum, aoi_sum, out_counts, ph_counts,
            activations, err_code, err_slot, err_node,
        ) = K.delta_episode(
            n,
            config.slots,
            config.seed,
            params.lam,
            params.eps,
            cfg_lam,
            lnl,
            homog,
            k_budget,
            p_static,
            phi0,
            lam_mean,
            eps_mean,
            config.protocol == "delta+" or config.delta.plus,
            config.delta.bt_p_adjust,
            int(fb.kind),
            fb.sigma_f,
            fb.eps_f,
            fb.omega_f,
            thresholds,
            config.debug_assertions,
        )
        if err_code != K.ERR_NONE:
            raise SimulationInvariantError(err_code, err_slot, err_node)
        node_slots = config.slots * n
        total_ph = ph_counts.sum()
        occupancy = {
            Phase(i).name: float(ph_counts[i] / total_ph) for i in range(4)
        }
        return MetricsLedger(
            protocol=config.protocol,
            slots=config.slots,
            n=n,
            seed=config.seed,
            violation={int(t): float(viol[j] / node_slots) for j, t in enumerate(thresholds)},
            violation_per_node={
                int(t): (viol_pn[j] / config.slots).tolist()
                for j, t in enumerate(thresholds)
            },
            mean_aoii=float(aoii_sum / node_slots),
            mean_aoi=float(aoi_sum / node_slots),
            collisions=int(out_counts[K.OUT_FAILURE]),
            successes=int(out_counts[K.OUT_SUCCESS]),
            silent=int(out_counts[K.OUT_SILENT]),
            activations=int(activations),
            phase_occupancy=occupancy,
            psi_zw_fraction=occupancy["ZW"],
        )

    bl = config.baseline
    proto_code = {"rr": K.PR_RR, "maf": K.PR_MAF, "zw": K.PR_ZW,
                  "lzw": K.PR_LZW, "gzw": K.PR_GZW}[bl.kind]
    (
        viol, viol_pn, aoii_sum, aoi_sum, out_counts, activations, poll_hash,
    ) = K.baseline_episode(
        proto_code,
        n,
        config.slots,
        config.seed,
        params.lam,
        params.eps,
        bl.p1,
        bl.p2,
        int(fb.kind),
        fb.sigma_f,
        fb.eps_f,
        fb.omega_f,
        thresholds,
    )
    node_slots = config.slots * n
    return MetricsLedger(
        protocol=config.protocol,
        slots=config.slots,
        n=n,
        seed=config.seed,
        violation={int(t): float(viol[j] / node_slots) for j, t in enumerate(thresholds)},
        violation_per_node={
            int(t): (viol_pn[j] / config.slots).tolist()
            for j, t in enumerate(thresholds)
        },
        mean_aoii=float(aoii_sum / node_slots),
        mean_aoi=float(aoi_sum / node_slots),
        collisions=int(out_counts[K.OUT_FAILURE]),
        successes=int(out_counts[K.OUT_SUCCESS]),
        silent=int(out_counts[K.OUT_SILENT]),
        activations=int(activations),
        poll_hash=int(poll_hash) if bl.kind in ("rr", "maf") else None,
    )


@dataclass
class HeterogeneitySummary:
    nu: float
    samples: int
    violation_mean: dict
    violation_std: dict
    mean_aoii: float
    mean_aoi: float
    ledgers: list


def sample_lambda_vector(n: int, rho: float, nu: float, rng) -> np.ndarray:
    """Uniform per-node activation draw centered on rho/N with half-width nu."""
    if not (0.0 <= nu < 1.0):
        raise ValueError("nu must lie in [0, 1)")
    base = rho / n
    return rng.uniform((1.0 - nu) * base, (1.0 + nu) * base, size=n)


def run_heterogeneity_sweep(
    base_config: EpisodeConfig, rho: float, nu: float, samples: int
) -> HeterogeneitySummary:
    """Re-run the episode over randomly drawn activation vectors.

    The protocol keeps the homogeneous average vector as its configuration
    while the physical process uses the drawn one.
    """
    n = base_config.params.n
    ledgers = []
    for s in range(samples):
        rng = np.random.default_rng(np.random.SeedSequence([base_config.seed, s]))
        lam = sample_lambda_vector(n, rho, nu, rng)
        params = SystemParams(n=n, lam=lam, eps=base_config.params.eps)
        cfg = replace(
            base_config,
            params=params,
            seed=base_config.seed + s,
            cfg_lam=np.full(n, rho / n),
        )
        ledgers.append(run_episode(cfg))
    thresholds = sorted(base_config.thresholds)
    vmean = {
        t: float(np.mean([led.violation[t] for led in ledgers])) for t in thresholds
    }
    vstd = {
        t: float(np.std([led.violation[t] for led in ledgers])) for t in thresholds
    }
    return HeterogeneitySummary(
        nu=nu,
        samples=samples,
        violation_mean=vmean,
        violation_std=vstd,
        mean_aoii=float(np.mean([led.mean_aoii for led in ledgers])),
        mean_aoi=float(np.mean([led.mean_aoi for led in ledgers])),
        ledgers=ledgers,
    )


def run_episodes(configs, workers: int = 1):
    """Run a batch of episodes, optionally across processes, order-stable."""
    if workers <= 1 or len(configs) <= 1:
        return [run_episode(c) for c in configs]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(run_episode, configs))
