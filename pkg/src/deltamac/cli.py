"""Command-line front end: parameter sweeps, baseline tuning, model tables.

Subcommands:
  sweep       run a sweep from a preset or a config file, emit CSV
  tune        grid-search baseline parameters for a scenario (cached)
  analyze     semi-Markov (K, pi_zw) tables and stability check
  optimize-p  export the per-round contention probability table

Every sweep is deterministic given its seed: re-running a preset with the
same seed produces byte-identical CSV.
"""

from __future__ import annotations

import argparse
import configparser
import csv
import math
import sys
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .baselines import TunedTable, ZW_FAMILY
from .channel import FeedbackModel
from .domain import SystemParams
from .engine import (
    BaselineConfig,
    DeltaConfig,
    EpisodeConfig,
    SimulationInvariantError,
    run_episode,
    run_episodes,
    run_heterogeneity_sweep,
)
from . import smm
from .cr import export_p_table

AXES = ("rho", "N", "nu", "sigma_f", "epsilon_f", "omega_f", "K")
ALL_PROTOCOLS = ("delta", "delta+", "rr", "maf", "zw", "lzw", "gzw")

DEFAULT_N = 20
DEFAULT_EPS = 0.05
DEFAULT_RHO = 0.5
DEFAULT_SLOTS = 10**6
DEFAULT_SEED = 12345
DEFAULT_THRESHOLDS = (0, 5)


@dataclass
class SweepSpec:
    """One sweep: an axis, its values, fixed scenario fields, protocols."""

    name: str
    axis: str
    values: list
    protocols: list
    output_path: str
    n: int = DEFAULT_N
    rho: float = DEFAULT_RHO
    eps: float = DEFAULT_EPS
    slots: int = DEFAULT_SLOTS
    seed: int = DEFAULT_SEED
    thresholds: tuple = DEFAULT_THRESHOLDS
    feedback: str = "ideal"
    k_budget: int | None = None
    samples: int = 100
    include_model_curves: bool = False

    def __post_init__(self):
        if self.axis not in AXES:
            raise ValueError(f"unknown sweep axis {self.axis!r}")
        if not self.values:
            raise ValueError("sweep needs at least one axis value")
        if sorted(self.values) != list(self.values):
            raise ValueError("axis values must be sorted")
        for p in self.protocols:
            if p not in ALL_PROTOCOLS:
                raise ValueError(f"unknown protocol {p!r}")


def _feedback_for(spec: SweepSpec, value) -> FeedbackModel:
    if spec.axis == "sigma_f":
        return FeedbackModel.noisy(value)
    if spec.axis == "epsilon_f":
        return FeedbackModel.erasure(value)
    if spec.axis == "omega_f":
        return FeedbackModel.deletion(value)
    kind = spec.feedback
    if kind == "ideal":
        return FeedbackModel.ideal()
    name, _, par = kind.partition(":")
    par = float(par) if par else 0.0
    return {
        "noisy": FeedbackModel.noisy,
        "erasure": FeedbackModel.erasure,
        "deletion": FeedbackModel.deletion,
    }[name](par)


def _scenario_for(spec: SweepSpec, value):
    n = spec.n
    rho = spec.rho
    if spec.axis == "N":
        n = int(value)
    elif spec.axis == "rho":
        rho = float(value)
    return SystemParams.homogeneous(n, rho, spec.eps)


def _csv_cell(v):
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return str(v)


def write_rows(path, fieldnames, rows):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    try:
        with open(path, "w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh)
            writer.writerow(fieldnames)
            for row in rows:
                writer.writerow([_csv_cell(row.get(k, "")) for k in fieldnames])
    except OSError as exc:
        raise OSError(f"cannot write sweep output to {path}: {exc}") from exc


def run_sweep(spec: SweepSpec, tuned: TunedTable, workers: int = 1) -> Path:
    """Execute one sweep and write its CSV; returns the output path."""
    thresholds = sorted(spec.thresholds)
    fieldnames = (
        ["protocol", "axis", "value"]
        + [f"v_theta{t}" for t in thresholds]
        + ["mean_aoii", "mean_aoi", "pi_zw", "seed", "slots"]
    )
    rows = []
    for proto in spec.protocols:
        for value in spec.values:
            params = _scenario_for(spec, value)
            fb = _feedback_for(spec, value)
            k_budget = spec.k_budget
            if spec.axis == "K" and proto in ("delta", "delta+"):
                k_budget = int(value)
            baseline = None
            if proto in ZW_FAMILY:
                tp, _ = tuned.get_or_tune(
                    proto, params, max(thresholds), seed=spec.seed
                )
                baseline = BaselineConfig(kind=proto, p1=tp.p1, p2=tp.p2)
            if spec.axis == "nu":
                base = EpisodeConfig(
                    params=params,
                    protocol=proto,
                    delta=DeltaConfig(k_budget=k_budget),
                    baseline=baseline,
                    feedback=fb,
                    slots=spec.slots,
                    seed=spec.seed,
                    thresholds=tuple(thresholds),
                )
                agg = run_heterogeneity_sweep(base, spec.rho, float(value), spec.samples)
                row = {
                    "protocol": proto,
                    "axis": spec.axis,
                    "value": value,
                    "mean_aoii": agg.mean_aoii,
                    "mean_aoi": agg.mean_aoi,
                    "pi_zw": (
                        float(np.mean([l.psi_zw_fraction for l in agg.ledgers]))
                        if proto in ("delta", "delta+")
                        else ""
                    ),
                    "seed": spec.seed,
                    "slots": spec.slots,
                }
                for t in thresholds:
                    row[f"v_theta{t}"] = agg.violation_mean[t]
                rows.append(row)
                continue
            cfg = EpisodeConfig(
                params=params,
                protocol=proto,
                delta=DeltaConfig(k_budget=k_budget),
                baseline=baseline,
                feedback=fb,
                slots=spec.slots,
                seed=spec.seed,
                thresholds=tuple(thresholds),
            )
            led = run_episode(cfg)
            row = led.as_row()
            row["axis"] = spec.axis
            row["value"] = value
            rows.append(row)
    if spec.include_model_curves:
        lam = spec.rho / spec.n
        for variant in (smm.PESSIMISTIC, smm.OPTIMISTIC):
            for value in spec.values:
                model = smm.build_model(spec.n, lam, spec.eps, int(value), variant=variant)
                rows.append(
                    {
                        "protocol": f"model-{variant}",
                        "axis": spec.axis,
                        "value": value,
                        "pi_zw": smm.pi_zw(model),
                        "seed": spec.seed,
                        "slots": 0,
                    }
                )
    write_rows(spec.output_path, fieldnames, rows)
    return Path(spec.output_path)


def _rho_grid(start, stop, step):
    count = int(round((stop - start) / step)) + 1
    return [round(start + i * step, 10) for i in range(count)]


def presets(outdir: str, slots: int, seed: int, samples: int | None = None) -> dict:
    """Figure-reproduction sweep specs keyed by preset name."""
    out = Path(outdir)
    k_grid = [10, 20, 30, 40, 50, 60, 70, 80, 100, 120]
    sig = dict(slots=slots, seed=seed)
    sam = {"samples": samples} if samples is not None else {}
    return {
        "fig2": [
            SweepSpec(
                name=f"fig2_rho{int(rho * 100):02d}",
                axis="K",
                values=k_grid,
                protocols=["delta"],
                rho=rho,
                output_path=str(out / f"fig2_rho{int(rho * 100):02d}.csv"),
                include_model_curves=True,
                **sig,
            )
            for rho in (0.2, 0.5)
        ],
        "fig4": [
            SweepSpec(
                name="fig4",
                axis="rho",
                values=_rho_grid(0.1, 0.6, 0.05),
                protocols=list(ALL_PROTOCOLS),
                output_path=str(out / "fig4.csv"),
                **sig,
            )
        ],
        "fig5": [
            SweepSpec(
                name=f"fig5_rho{int(rho * 100):02d}",
                axis="N",
                values=[10, 15, 20, 25, 30],
                protocols=list(ALL_PROTOCOLS),
                rho=rho,
                output_path=str(out / f"fig5_rho{int(rho * 100):02d}.csv"),
                **sig,
            )
            for rho in (0.3, 0.5)
        ],
        "fig6": [
            SweepSpec(
                name="fig6",
                axis="nu",
                values=[0.0, 0.25, 0.5, 0.75],
                protocols=list(ALL_PROTOCOLS),
                rho=0.5,
                output_path=str(out / "fig6.csv"),
                **sig,
                **sam,
            )
        ],
        "fig7": [
            SweepSpec(
                name=f"fig7_rho{int(rho * 100):02d}",
                axis="sigma_f",
                values=[0.0, 1.0, 2.0, 3.0, 4.0, 5.0],
                protocols=list(ALL_PROTOCOLS),
                rho=rho,
                output_path=str(out / f"fig7_rho{int(rho * 100):02d}.csv"),
                **sig,
            )
            for rho in (0.3, 0.5)
        ],
        "fig8": [
            SweepSpec(
                name=f"fig8_rho{int(rho * 100):02d}",
                axis="epsilon_f",
                values=[0.0, 0.05, 0.1, 0.15, 0.2],
                protocols=list(ALL_PROTOCOLS),
                rho=rho,
                output_path=str(out / f"fig8_rho{int(rho * 100):02d}.csv"),
                **sig,
            )
            for rho in (0.3, 0.5)
        ],
        "fig9": [
            SweepSpec(
                name="fig9",
                axis="omega_f",
                values=[0.0, 0.05, 0.1, 0.15, 0.2],
                protocols=list(ALL_PROTOCOLS),
                rho=0.5,
                output_path=str(out / "fig9.csv"),
                **sig,
            )
        ],
    }


def specs_from_config(path: str, outdir: str, slots=None, seed=None) -> list:
    """Parse sweep sections from a key = value config file."""
    parser = configparser.ConfigParser()
    read = parser.read(path)
    if not read:
        raise FileNotFoundError(f"config file not found: {path}")
    specs = []
    for section in parser.sections():
        if not section.startswith("sweep"):
            continue
        sec = parser[section]
        name = section.split(":", 1)[1] if ":" in section else section
        spec = SweepSpec(
            name=name,
            axis=sec.get("axis", "rho"),
            values=[float(v) for v in sec.get("values", "").split(",") if v.strip()],
            protocols=[p.strip() for p in sec.get("protocols", "delta").split(",")],
            output_path=sec.get("out", str(Path(outdir) / f"{name}.csv")),
            n=sec.getint("n", DEFAULT_N),
            rho=sec.getfloat("rho", DEFAULT_RHO),
            eps=sec.getfloat("eps", DEFAULT_EPS),
            slots=slots if slots is not None else sec.getint("slots", DEFAULT_SLOTS),
            seed=seed if seed is not None else sec.getint("seed", DEFAULT_SEED),
            thresholds=tuple(
                int(t) for t in sec.get("thresholds", "0,5").split(",")
            ),
            feedback=sec.get("feedback", "ideal"),
            k_budget=sec.getint("k_budget", fallback=None),
            samples=sec.getint("samples", 100),
        )
        if spec.axis in ("N", "K"):
            spec.values = [int(v) for v in spec.values]
        specs.append(spec)
    if not specs:
        raise ValueError(f"no [sweep*] sections found in {path}")
    return specs


def cmd_sweep(args) -> int:
    tuned = TunedTable(args.tune_cache or (Path(args.out) / "tuned_params.json"))
    if args.preset:
        table = presets(args.out, args.slots or DEFAULT_SLOTS, args.seed or DEFAULT_SEED,
                        args.samples)
        if args.preset not in table:
            print(f"unknown preset {args.preset!r}", file=sys.stderr)
            return 2
        specs = table[args.preset]
    else:
        specs = specs_from_config(args.config, args.out, args.slots, args.seed)
    for spec in specs:
        path = run_sweep(spec, tuned, workers=args.workers)
        print(f"wrote {path}")
    return 0


def cmd_tune(args) -> int:
    params = SystemParams.homogeneous(args.n, args.rho, args.eps)
    tuned = TunedTable(args.cache)
    for kind in args.protocols.split(","):
        kind = kind.strip()
        for thr in (int(t) for t in args.thresholds.split(",")):
            tp, cached = tuned.get_or_tune(
                kind, params, thr, seed=args.seed, force=args.no_cache
            )
            tag = "cached" if cached else "tuned"
            print(
                f"{tag} {kind} thr={thr}: p1={tp.p1} p2={tp.p2} "
                f"objective={tp.objective}"
            )
    if args.out:
        tuned.export_text(args.out)
        print(f"wrote {args.out}")
    return 0


def cmd_analyze(args) -> int:
    lam = args.rho / args.n
    variants = (
        [smm.PESSIMISTIC, smm.OPTIMISTIC] if args.variant == "both" else [args.variant]
    )
    unstable = False
    for variant in variants:
        rows = []
        for k in range(args.k_min, args.k_max + 1, args.k_step):
            model = smm.build_model(args.n, lam, args.eps, k, variant=variant)
            rows.append((k, smm.pi_zw(model)))
        best = max(rows, key=lambda r: r[1])
        path = Path(args.out) / f"smm_{variant}_n{args.n}_rho{args.rho!r}.txt"
        path.parent.mkdir(parents=True, exist_ok=True)
        smm.export_pi_table(path, rows)
        print(f"{variant}: K*={best[0]} pi_zw={best[1]!r} -> {path}")
        model = smm.build_model(args.n, lam, args.eps, best[0], variant=variant)
        if not smm.is_stable(model):
            unstable = True
            print(f"warning: {variant} model unstable at K*={best[0]}", file=sys.stderr)
    return 1 if unstable else 0


def cmd_optimize_p(args) -> int:
    entries = [(n_i, args.lam, args.eps) for n_i in range(1, args.n + 1)]
    export_p_table(args.out, entries)
    print(f"wrote {args.out}")
    return 0


def build_parser():
    ap = argparse.ArgumentParser(prog="deltamac", description=__doc__)
    sub = ap.add_subparsers(dest="command", required=True)

    sw = sub.add_parser("sweep", help="run figure sweeps")
    sw.add_argument("--preset", choices=["fig2", "fig4", "fig5", "fig6", "fig7", "fig8", "fig9"])
    sw.add_argument("--config", help="config file with [sweep:*] sections")
    sw.add_argument("--out", default="results", help="output directory")
    sw.add_argument("--slots", type=int, default=None)
    sw.add_argument("--seed", type=int, default=None)
    sw.add_argument("--samples", type=int, default=None, help="heterogeneity samples")
    sw.add_argument("--workers", type=int, default=1)
    sw.add_argument("--tune-cache", default=None)
    sw.set_defaults(func=cmd_sweep)

    tn = sub.add_parser("tune", help="grid-search baseline parameters")
    tn.add_argument("--n", type=int, default=DEFAULT_N)
    tn.add_argument("--rho", type=float, default=DEFAULT_RHO)
    tn.add_argument("--eps", type=float, default=DEFAULT_EPS)
    tn.add_argument("--protocols", default="zw,lzw,gzw")
    tn.add_argument("--thresholds", default="0,5")
    tn.add_argument("--seed", type=int, default=DEFAULT_SEED)
    tn.add_argument("--cache", default="results/tuned_params.json")
    tn.add_argument("--no-cache", action="store_true", help="force re-tuning")
    tn.add_argument("--out", default=None, help="plain-text export path")
    tn.set_defaults(func=cmd_tune)

    an = sub.add_parser("analyze", help="semi-Markov design tables")
    an.add_argument("--n", type=int, default=DEFAULT_N)
    an.add_argument("--rho", type=float, default=DEFAULT_RHO)
    an.add_argument("--eps", type=float, default=DEFAULT_EPS)
    an.add_argument("--variant", choices=["pessimistic", "optimistic", "both"], default="both")
    an.add_argument("--k-min", type=int, default=2)
    an.add_argument("--k-max", type=int, default=120)
    an.add_argument("--k-step", type=int, default=1)
    an.add_argument("--out", default="results")
    an.set_defaults(func=cmd_analyze)

    op = sub.add_parser("optimize-p", help="export contention probability table")
    op.add_argument("--n", type=int, default=DEFAULT_N)
    op.add_argument("--lam", type=float, default=0.025)
    op.add_argument("--eps", type=float, default=DEFAULT_EPS)
    op.add_argument("--out", default="results/p_star.txt")
    op.set_defaults(func=cmd_optimize_p)
    return ap


def main(argv=None) -> int:
    ap = build_parser()
    args = ap.parse_args(argv)
    if args.command == "sweep" and not (args.preset or args.config):
        ap.error("sweep needs --preset or --config")
    try:
        return args.func(args)
    except SimulationInvariantError as exc:
        print(f"invariant failure: {exc}", file=sys.stderr)
        return 1
    except (ValueError, FileNotFoundError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
