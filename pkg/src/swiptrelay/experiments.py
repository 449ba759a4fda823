"""Monte-Carlo experiment harness: sweeps, baselines, aggregation, CSV.

Every realization is keyed by a seed derived deterministically from the
master seed and the (grid index, realization index) pair, so repeated runs
of the same plan produce byte-identical CSV output.

Baseline runs on one realization are warm-started along the relaxation
chain: the no-relay-precoding solution seeds the proposed solver (whose
search space contains the baseline's), and the proposed solution seeds the
no-EH solver (which drops one constraint).  Each solver step is monotone in
EE, so the documented per-realization dominance ordering holds by
construction whenever both runs are feasible.
"""

from __future__ import annotations

import csv
import enum
import io
import os
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .model import NetworkConfig, ChannelMode, generate_channels, channel_spectra
from .objective import SpectrumPoint
from . import solver as slv
from .solver import SolverOptions, Solution, InfeasibleError

__all__ = [
    "PlanKind",
    "Baseline",
    "ExperimentPlan",
    "ExperimentRecord",
    "PlanResult",
    "run_baseline_no_eh",
    "run_baseline_no_relay_precoding",
    "feasibility_probability",
    "run_plan",
    "write_records_csv",
    "write_aggregates_csv",
]

RECORD_HEADER = [
    "plan_kind", "sweep_param", "sweep_value", "seed", "baseline", "feasible",
    "ee_bits_per_hz_joule", "rate1", "rate2", "alpha",
    "outer_iters", "dinkelbach_iters_total",
]
AGGREGATE_HEADER = ["sweep_value", "baseline", "n_feasible", "n_total", "mean_ee", "ci95_ee"]


class PlanKind(enum.Enum):
    SWEEP_PMAX = "SweepPmax"
    SWEEP_RT_MIN = "SweepRtMin"
    FEASIBILITY_VS_PMAX = "FeasibilityVsPmax"
    FEASIBILITY_VS_RT_MIN = "FeasibilityVsRtMin"
    CONVERGENCE = "Convergence"
    MULTISTART_COMPARE = "MultistartCompare"


class Baseline(enum.Enum):
    PROPOSED = "Proposed"
    NO_EH = "NoEH"
    NO_RELAY_PRECODING = "NoRelayPrecoding"
    MULTISTART = "Multistart"


_SWEEP_PARAM = {
    PlanKind.SWEEP_PMAX: "pmax",
    PlanKind.SWEEP_RT_MIN: "rt_min",
    PlanKind.FEASIBILITY_VS_PMAX: "pmax",
    PlanKind.FEASIBILITY_VS_RT_MIN: "rt_min",
    PlanKind.CONVERGENCE: "init",
    PlanKind.MULTISTART_COMPARE: "snr",
}


@dataclass(frozen=True)
class ExperimentPlan:
    kind: PlanKind
    grid: tuple[float, ...]
    n_realizations: int = 100
    master_seed: int = 0
    baselines: tuple[Baseline, ...] = (
        Baseline.PROPOSED, Baseline.NO_EH, Baseline.NO_RELAY_PRECODING,
    )
    channel_mode: ChannelMode = ChannelMode.SHARED_LEFT_UNITARY
    multistart_k: int = 100

    def __post_init__(self):
        if len(self.grid) == 0:
            raise ValueError("grid must be nonempty")
        if self.n_realizations < 1:
            raise ValueError("n_realizations must be >= 1")


@dataclass
class ExperimentRecord:
    plan_kind: str
    sweep_param: str
    sweep_value: float
    seed: int
    baseline: str
    feasible: bool
    ee: Optional[float]
    rate1: Optional[float]
    rate2: Optional[float]
    alpha: Optional[float]
    outer_iters: int
    dinkelbach_iters_total: int

    def row(self) -> list[str]:
        def num(v):
            return "" if v is None else f"{v:.12g}"
        return [
            self.plan_kind, self.sweep_param, f"{self.sweep_value:.12g}",
            str(self.seed), self.baseline, str(int(self.feasible)),
            num(self.ee), num(self.rate1), num(self.rate2), num(self.alpha),
            str(self.outer_iters), str(self.dinkelbach_iters_total),
        ]


@dataclass
class PlanResult:
    plan: ExperimentPlan
    records: list[ExperimentRecord]
    aggregates: list[dict]
    traces: list[tuple[int, list[float]]] = field(default_factory=list)  # convergence only


def _realization_seed(master_seed: int, grid_index: int, real_index: int) -> int:
    ss = np.random.SeedSequence([int(master_seed), int(grid_index), int(real_index)])
    return int(ss.generate_state(1, dtype=np.uint64)[0] % (2**63))


def _config_at(config: NetworkConfig, kind: PlanKind, value: float) -> NetworkConfig:
    param = _SWEEP_PARAM[kind]
    if param == "pmax":
        return config.with_updates(p1_max=value, p2_max=value, pr_max=value)
    if param == "rt_min":
        return config.with_updates(rt_min=value)
    if param == "snr":
        # SNR defined as the ratio of the power cap to the noise power
        s2 = config.p1_max / value
        return config.with_updates(sigma2_1=s2, sigma2_2=s2, sigma2_r=s2, sigma2_d=s2)
    return config


def run_baseline_no_eh(ch, config: NetworkConfig, opts: SolverOptions,
                       init: SpectrumPoint | None = None) -> Solution:
    """No-EH scheme: all received power decodes; harvesting constraint off."""
    return slv.alternate(ch, config, opts, init, include_eh=False)


def run_baseline_no_relay_precoding(ch, config: NetworkConfig,
                                    opts: SolverOptions) -> Solution:
    """Relay eigenvalue spectrum pinned to the uniform full-power profile.

    The fixed square-root eigenvalue matrix is sqrt(pr_max/nr) I, i.e. each
    relay eigenvalue equals pr_max/nr; only the transceiver spectra and the
    splitting factor are optimized.
    """
    fixed = np.full(config.nr, config.pr_max / config.nr)
    return slv.alternate(ch, config, opts, relay_spectrum_fixed=fixed)


def _record_from_solution(plan: ExperimentPlan, value: float, seed: int,
                          baseline: Baseline, sol: Solution | None) -> ExperimentRecord:
    if sol is None:
        return ExperimentRecord(
            plan_kind=plan.kind.value, sweep_param=_SWEEP_PARAM[plan.kind],
            sweep_value=value, seed=seed, baseline=baseline.value,
            feasible=False, ee=None, rate1=None, rate2=None, alpha=None,
            outer_iters=0, dinkelbach_iters_total=0,
        )
    return ExperimentRecord(
        plan_kind=plan.kind.value, sweep_param=_SWEEP_PARAM[plan.kind],
        sweep_value=value, seed=seed, baseline=baseline.value,
        feasible=True, ee=sol.ee, rate1=sol.rates[0], rate2=sol.rates[1],
        alpha=sol.point.alpha, outer_iters=len(sol.trace.rows),
        dinkelbach_iters_total=sol.trace.total_dinkelbach_iters(),
    )


def _solve_baselines(plan: ExperimentPlan, cfg: NetworkConfig, opts: SolverOptions,
                     ch, seed: int, value: float) -> list[ExperimentRecord]:
    records = []
    solutions: dict[Baseline, Solution | None] = {}

    def attempt(fn):
        try:
            return fn()
        except InfeasibleError:
            return None

    if Baseline.NO_RELAY_PRECODING in plan.baselines:
        solutions[Baseline.NO_RELAY_PRECODING] = attempt(
            lambda: run_baseline_no_relay_precoding(ch, cfg, opts))

    if Baseline.PROPOSED in plan.baselines or Baseline.NO_EH in plan.baselines \
            or Baseline.MULTISTART in plan.baselines:
        base = solutions.get(Baseline.NO_RELAY_PRECODING)
        proposed = attempt(lambda: slv.alternate(ch, cfg, opts))
        if base is not None:
            # the baseline's point lies inside the proposed feasible set;
            # warm-start from it and keep the better outcome
            warm = attempt(lambda: slv.alternate(ch, cfg, opts, base.point))
            if warm is not None and (proposed is None or warm.ee > proposed.ee):
                proposed = warm
        solutions[Baseline.PROPOSED] = proposed

    if Baseline.NO_EH in plan.baselines:
        proposed = solutions.get(Baseline.PROPOSED)
        no_eh = attempt(lambda: run_baseline_no_eh(ch, cfg, opts))
        if proposed is not None:
            init = SpectrumPoint(1.0 - slv.ALPHA_MIN, proposed.point.lambda_q1,
                                 proposed.point.lambda_q2, proposed.point.lambda_qr)
            warm = attempt(lambda: run_baseline_no_eh(ch, cfg, opts, init))
            if warm is not None and (no_eh is None or warm.ee > no_eh.ee):
                no_eh = warm
        solutions[Baseline.NO_EH] = no_eh

    if Baseline.MULTISTART in plan.baselines:
        best = attempt(lambda: slv.multistart(
            ch, cfg, opts.with_updates(rng_seed=seed), plan.multistart_k))
        proposed = solutions.get(Baseline.PROPOSED)
        if best is not None and proposed is not None and proposed.ee > best.ee:
            best = proposed
        solutions[Baseline.MULTISTART] = best

    for baseline in plan.baselines:
        if baseline in solutions:
            records.append(_record_from_solution(plan, value, seed, baseline,
                                                 solutions[baseline]))
    return records


def feasibility_probability(plan: ExperimentPlan, config: NetworkConfig,
                            opts: SolverOptions) -> list[dict]:
    """Per grid value: fraction of realizations with a feasible point, and
    the ergodic-infeasibility flag (fraction below one half)."""
    if plan.kind not in (PlanKind.FEASIBILITY_VS_PMAX, PlanKind.FEASIBILITY_VS_RT_MIN):
        raise ValueError("plan kind is not a feasibility sweep")
    table = []
    for gi, value in enumerate(plan.grid):
        cfg = _config_at(config, plan.kind, value)
        n_feasible = 0
        for j in range(plan.n_realizations):
            seed = _realization_seed(plan.master_seed, gi, j)
            ch = generate_channels(cfg, seed, plan.channel_mode)
            if slv.find_feasible_point(ch, cfg, opts) is not None:
                n_feasible += 1
        frac = n_feasible / plan.n_realizations
        table.append({
            "sweep_value": value,
            "n_feasible": n_feasible,
            "n_total": plan.n_realizations,
            "fraction": frac,
            "ergodically_infeasible": frac < 0.5,
        })
    return table


def _aggregate(records: list[ExperimentRecord]) -> list[dict]:
    keys = sorted({(r.sweep_value, r.baseline) for r in records},
                  key=lambda t: (t[0], t[1]))
    out = []
    for value, baseline in keys:
        group = [r for r in records if r.sweep_value == value and r.baseline == baseline]
        ees = np.array([r.ee for r in group if r.feasible and r.ee is not None])
        n_feasible = int(sum(r.feasible for r in group))
        mean_ee = float(np.mean(ees)) if ees.size else None
        if ees.size > 1:
            ci95 = 1.96 * float(np.std(ees, ddof=1)) / np.sqrt(ees.size)
        elif ees.size == 1:
            ci95 = 0.0
        else:
            ci95 = None
        out.append({
            "sweep_value": value, "baseline": baseline,
            "n_feasible": n_feasible, "n_total": len(group),
            "mean_ee": mean_ee, "ci95_ee": ci95,
        })
    return out


def run_plan(plan: ExperimentPlan, config: NetworkConfig, opts: SolverOptions,
             out_dir: str | None = None) -> PlanResult:
    """Execute a plan; deterministic for a fixed master seed.

    Optionally writes ``records.csv`` and ``aggregates.csv`` (and
    ``convergence_traces.csv`` for the convergence plan) under out_dir.
    """
    records: list[ExperimentRecord] = []
    traces: list[tuple[int, list[float]]] = []

    if plan.kind in (PlanKind.SWEEP_PMAX, PlanKind.SWEEP_RT_MIN):
        for gi, value in enumerate(plan.grid):
            cfg = _config_at(config, plan.kind, value)
            for j in range(plan.n_realizations):
                seed = _realization_seed(plan.master_seed, gi, j)
                ch = generate_channels(cfg, seed, plan.channel_mode)
                records.extend(_solve_baselines(plan, cfg, opts, ch, seed, value))

    elif plan.kind in (PlanKind.FEASIBILITY_VS_PMAX, PlanKind.FEASIBILITY_VS_RT_MIN):
        for gi, value in enumerate(plan.grid):
            cfg = _config_at(config, plan.kind, value)
            for j in range(plan.n_realizations):
                seed = _realization_seed(plan.master_seed, gi, j)
                ch = generate_channels(cfg, seed, plan.channel_mode)
                pt = slv.find_feasible_point(ch, cfg, opts)
                records.append(ExperimentRecord(
                    plan_kind=plan.kind.value, sweep_param=_SWEEP_PARAM[plan.kind],
                    sweep_value=value, seed=seed, baseline=Baseline.PROPOSED.value,
                    feasible=pt is not None, ee=None, rate1=None, rate2=None,
                    alpha=None if pt is None else pt.alpha,
                    outer_iters=0, dinkelbach_iters_total=0,
                ))

    elif plan.kind is PlanKind.CONVERGENCE:
        # one fixed channel; grid entries index the random initializations
        seed = _realization_seed(plan.master_seed, 0, 0)
        ch = generate_channels(config, seed, plan.channel_mode)
        spectra = channel_spectra(ch)
        for gi, value in enumerate(plan.grid):
            rng = np.random.default_rng([plan.master_seed, 1, gi])
            init = slv.random_point(spectra, config, rng)
            try:
                sol = slv.alternate(ch, config, opts, init)
            except InfeasibleError:
                sol = None
            records.append(_record_from_solution(plan, value, seed,
                                                 Baseline.PROPOSED, sol))
            if sol is not None:
                traces.append((gi, list(sol.trace.ee_values())))

    elif plan.kind is PlanKind.MULTISTART_COMPARE:
        ms_plan_baselines = (Baseline.PROPOSED, Baseline.MULTISTART)
        eff = ExperimentPlan(
            kind=plan.kind, grid=plan.grid, n_realizations=plan.n_realizations,
            master_seed=plan.master_seed, baselines=ms_plan_baselines,
            channel_mode=plan.channel_mode, multistart_k=plan.multistart_k,
        )
        for gi, value in enumerate(plan.grid):
            cfg = _config_at(config, plan.kind, value)
            for j in range(plan.n_realizations):
                seed = _realization_seed(plan.master_seed, gi, j)
                ch = generate_channels(cfg, seed, plan.channel_mode)
                records.extend(_solve_baselines(eff, cfg, opts, ch, seed, value))
    else:
        raise ValueError(f"unsupported plan kind: {plan.kind}")

    aggregates = _aggregate(records)
    result = PlanResult(plan=plan, records=records, aggregates=aggregates, traces=traces)
    if out_dir is not None:
        os.makedirs(out_dir, exist_ok=True)
        write_records_csv(os.path.join(out_dir, "records.csv"), records)
        write_aggregates_csv(os.path.join(out_dir, "aggregates.csv"), aggregates)
        if traces:
            _write_traces_csv(os.path.join(out_dir, "convergence_traces.csv"), traces)
    return result


def write_records_csv(path: str, records: list[ExperimentRecord]) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(RECORD_HEADER)
        for r in records:
            w.writerow(r.row())


def write_aggregates_csv(path: str, aggregates: list[dict]) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(AGGREGATE_HEADER)
        for a in aggregates:
            def num(v):
                return "" if v is None else f"{v:.12g}"
            w.writerow([
                f"{a['sweep_value']:.12g}", a["baseline"],
                str(a["n_feasible"]), str(a["n_total"]),
                num(a["mean_ee"]), num(a["ci95_ee"]),
            ])


def _write_traces_csv(path: str, traces: list[tuple[int, list[float]]]) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["init", "iteration", "ee"])
        for init_idx, ee_values in traces:
            for it, ee in enumerate(ee_values, start=1):
                w.writerow([str(init_idx), str(it), f"{ee:.12g}"])
