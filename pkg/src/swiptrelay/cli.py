"""Command-line front end: single solves, sweeps, feasibility studies.

Exit codes: 0 success, 1 config error, 2 infeasible instance,
3 solver non-convergence (outputs still written where possible).
"""

from __future__ import annotations

import argparse
import os
import sys

import numpy as np

from .model import (
    ChannelMode,
    ConfigError,
    NetworkConfig,
    config_from_mapping,
    generate_channels,
    load_config_file,
)
from . import solver as slv
from .solver import InfeasibleError, SolverOptions, options_from_mapping
from . import experiments as xp
from . import matprops

__all__ = ["main"]

EXIT_OK = 0
EXIT_CONFIG = 1
EXIT_INFEASIBLE = 2
EXIT_NOCONVERGE = 3


def _parse_grid(spec: str) -> tuple[str, tuple[float, ...]]:
    """Parse 'key=start:stop:step' into (key, inclusive grid)."""
    if "=" not in spec:
        raise ValueError(f"bad grid spec: {spec}")
    key, rng = spec.split("=", 1)
    parts = rng.split(":")
    if len(parts) == 1:
        return key, (float(parts[0]),)
    if len(parts) != 3:
        raise ValueError(f"bad grid spec: {spec}")
    start, stop, step = (float(p) for p in parts)
    if step <= 0:
        raise ValueError(f"grid step must be positive: {spec}")
    values = []
    v = start
    while v <= stop + 1e-9:
        values.append(round(v, 12))
        v += step
    return key, tuple(values)


def _load(args) -> tuple[NetworkConfig, SolverOptions]:
    mapping: dict[str, str] = {}
    if args.config and args.config != "defaults":
        mapping.update(load_config_file(args.config))
    for item in args.set or []:
        if "=" not in item:
            raise ConfigError(f"override must be KEY=VALUE: {item}")
        key, value = item.split("=", 1)
        mapping[key.strip()] = value.strip()
    config = config_from_mapping(mapping)
    try:
        opts = options_from_mapping(mapping)
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    return config, opts


def _channel_mode(args) -> ChannelMode:
    return ChannelMode.IID_GAUSSIAN if args.mode == "iid" else ChannelMode.SHARED_LEFT_UNITARY


def _add_common(p: argparse.ArgumentParser):
    p.add_argument("--config", default="defaults", help="config file path or 'defaults'")
    p.add_argument("--out", default="out", help="output directory")
    p.add_argument("--seed", type=int, default=0, help="master seed")
    p.add_argument("--set", action="append", metavar="KEY=VALUE",
                   help="override a config key (repeatable)")
    p.add_argument("--realizations", type=int, default=100)
    p.add_argument("--grid", default=None, metavar="SPEC",
                   help="sweep grid, e.g. pmax=2:8:2 or rt_min=1:12:1")
    p.add_argument("--mode", choices=("shared", "iid"), default="shared")
    p.add_argument("--plot", action="store_true", help="emit line charts next to CSV")


def _cmd_solve(args, config, opts) -> int:
    ch = generate_channels(config, args.seed, _channel_mode(args))
    sol = slv.alternate(ch, config, opts)
    rep = sol.report
    print(f"ee_bits_per_hz_joule {sol.ee:.6g}")
    print(f"alpha {sol.point.alpha:.6g}")
    print(f"rate1 {sol.rates[0]:.6g}  rate2 {sol.rates[1]:.6g}")
    print(f"slacks power_tr1={rep.power_tr1:.3g} power_tr2={rep.power_tr2:.3g} "
          f"power_relay={rep.power_relay:.3g} rate_tr1={rep.rate_tr1:.3g} "
          f"rate_tr2={rep.rate_tr2:.3g} eh_balance={rep.eh_balance:.3g}")
    print(f"outer_iters {len(sol.trace.rows)} "
          f"dinkelbach_iters_total {sol.trace.total_dinkelbach_iters()}")
    if args.out:
        os.makedirs(args.out, exist_ok=True)
        with open(os.path.join(args.out, "trace.csv"), "w") as fh:
            sol.trace.to_csv(fh)
    if not sol.converged:
        print("ERR_NOCONVERGE: iteration cap reached; best iterate reported")
        return EXIT_NOCONVERGE
    return EXIT_OK


def _plan_for(args, kind_by_key, default_key) -> xp.ExperimentPlan:
    key, grid = _parse_grid(args.grid) if args.grid else (default_key, None)
    if key not in kind_by_key:
        raise ConfigError(f"grid key '{key}' not valid here "
                          f"(expected one of {sorted(kind_by_key)})")
    if grid is None:
        grid = kind_by_key[key][1]
    return xp.ExperimentPlan(
        kind=kind_by_key[key][0], grid=grid,
        n_realizations=args.realizations, master_seed=args.seed,
        channel_mode=_channel_mode(args),
    )


def _maybe_plot(args, result: xp.PlanResult) -> None:
    if not args.plot:
        return
    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    fig, ax = plt.subplots()
    if result.traces:
        for idx, ee_values in result.traces:
            ax.plot(range(1, len(ee_values) + 1), ee_values, label=f"init {idx}")
        ax.set_xlabel("iteration")
        ax.set_ylabel("EE (bits/Hz/J)")
    else:
        by_baseline: dict[str, list[tuple[float, float]]] = {}
        for a in result.aggregates:
            if a["mean_ee"] is not None:
                by_baseline.setdefault(a["baseline"], []).append(
                    (a["sweep_value"], a["mean_ee"]))
        if by_baseline:
            for name, pts in sorted(by_baseline.items()):
                pts.sort()
                ax.plot([p[0] for p in pts], [p[1] for p in pts], marker="o", label=name)
            ax.set_ylabel("mean EE (bits/Hz/J)")
        else:
            frac: dict[float, tuple[int, int]] = {}
            for r in result.records:
                n_f, n_t = frac.get(r.sweep_value, (0, 0))
                frac[r.sweep_value] = (n_f + int(r.feasible), n_t + 1)
            values = sorted(frac)
            ax.plot(values, [frac[v][0] / frac[v][1] for v in values], marker="o",
                    label="feasibility")
            ax.set_ylabel("feasibility fraction")
        ax.set_xlabel(result.records[0].sweep_param if result.records else "sweep")
    ax.legend()
    fig.savefig(os.path.join(args.out, "plot.png"), dpi=120)
    plt.close(fig)


def _cmd_sweep(args, config, opts) -> int:
    plan = _plan_for(args, {
        "pmax": (xp.PlanKind.SWEEP_PMAX, (2.0, 4.0, 6.0, 8.0)),
        "rt_min": (xp.PlanKind.SWEEP_RT_MIN, (0.5, 1.0, 2.0, 4.0)),
    }, "pmax")
    result = xp.run_plan(plan, config, opts, out_dir=args.out)
    _maybe_plot(args, result)
    print(f"wrote {len(result.records)} records, "
          f"{len(result.aggregates)} aggregate rows to {args.out}")
    return EXIT_OK


def _cmd_feasibility(args, config, opts) -> int:
    plan = _plan_for(args, {
        "pmax": (xp.PlanKind.FEASIBILITY_VS_PMAX, (1.0, 2.0, 4.0, 8.0)),
        "rt_min": (xp.PlanKind.FEASIBILITY_VS_RT_MIN, (1.0, 2.0, 4.0, 8.0, 12.0)),
    }, "pmax")
    result = xp.run_plan(plan, config, opts, out_dir=args.out)
    table = xp.feasibility_probability(plan, config, opts)
    for row in table:
        flag = " (ergodically infeasible)" if row["ergodically_infeasible"] else ""
        print(f"{plan.kind.value} value={row['sweep_value']:g} "
              f"fraction={row['fraction']:.3f}{flag}")
    _maybe_plot(args, result)
    return EXIT_OK


def _cmd_convergence(args, config, opts) -> int:
    n_inits = args.realizations if args.realizations else 10
    plan = xp.ExperimentPlan(
        kind=xp.PlanKind.CONVERGENCE, grid=tuple(float(i) for i in range(n_inits)),
        n_realizations=1, master_seed=args.seed, channel_mode=_channel_mode(args),
    )
    result = xp.run_plan(plan, config, opts, out_dir=args.out)
    _maybe_plot(args, result)
    finals = [t[1][-1] for t in result.traces]
    if not finals:
        print("ERR_INFEASIBLE: no initialization converged to a feasible point")
        return EXIT_INFEASIBLE
    spread = (max(finals) - min(finals)) / max(abs(max(finals)), 1e-12)
    print(f"convergence traces={len(finals)} final EE spread={spread:.3g}")
    return EXIT_OK


def _cmd_multistart(args, config, opts) -> int:
    key, grid = _parse_grid(args.grid) if args.grid else ("snr", (10.0, 40.0))
    if key != "snr":
        raise ConfigError("multistart sweeps over snr=...")
    plan = xp.ExperimentPlan(
        kind=xp.PlanKind.MULTISTART_COMPARE, grid=grid,
        n_realizations=args.realizations, master_seed=args.seed,
        channel_mode=_channel_mode(args), multistart_k=args.k,
    )
    result = xp.run_plan(plan, config, opts, out_dir=args.out)
    _maybe_plot(args, result)
    print(f"wrote {len(result.records)} records to {args.out}")
    return EXIT_OK


def _cmd_props_check(args, config, opts) -> int:
    rng = np.random.default_rng(args.seed)
    n, size, fails = 1000, 4, 0
    checks = 0
    for _ in range(n):
        a = _random_hermitian(rng, size)
        b = _random_hermitian(rng, size)
        psd_a, psd_b = _random_psd(rng, size), _random_psd(rng, size)
        pd_a = psd_a + np.eye(size) * 0.1

        for pair, fn in (
            (matprops.hermitian_pair(a, b), matprops.trace_product_bounds),
            (matprops.hermitian_pair(psd_a, psd_b), matprops.det_sum_bounds),
            (matprops.hermitian_pair(pd_a, psd_b), matprops.det_identity_inverse_bounds),
        ):
            lower, value, upper = fn(pair)
            slack = 1e-9 * max(1.0, abs(lower), abs(upper))
            checks += 1
            if not (lower - slack <= value <= upper + slack):
                fails += 1
    print(f"props-check: {checks - fails}/{checks} passed, {fails} failed")
    return EXIT_OK if fails == 0 else EXIT_NOCONVERGE


def _random_hermitian(rng, n):
    z = rng.standard_normal((n, n)) + 1j * rng.standard_normal((n, n))
    return (z + z.conj().T) / 2.0


def _random_psd(rng, n):
    z = rng.standard_normal((n, n)) + 1j * rng.standard_normal((n, n))
    return z @ z.conj().T / n


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="swiptrelay",
        description="EE-maximizing precoding and power splitting for a "
                    "SWIPT MIMO two-way relay network",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    for name, fn in (
        ("solve", _cmd_solve), ("sweep", _cmd_sweep),
        ("feasibility", _cmd_feasibility), ("convergence", _cmd_convergence),
        ("multistart", _cmd_multistart), ("props-check", _cmd_props_check),
    ):
        p = sub.add_parser(name)
        _add_common(p)
        if name == "multistart":
            p.add_argument("-k", type=int, default=100, dest="k",
                           help="number of random starts")
        p.set_defaults(fn=fn)
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        config, opts = _load(args)
    except (ConfigError, OSError, ValueError) as exc:
        print(f"ERR_CONFIG: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    try:
        return args.fn(args, config, opts)
    except InfeasibleError as exc:
        print(f"ERR_INFEASIBLE: {exc}", file=sys.stderr)
        return EXIT_INFEASIBLE
    except ConfigError as exc:
        print(f"ERR_CONFIG: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
