"""Optimization engine for the EE maximization problem.

The problem is solved in the eigenvalue domain.  The outer loop alternates
three blocks: relay spectrum, transceiver spectra, and the power-splitting
factor.  Each spectrum block is a concave/affine fractional program handled
by Dinkelbach's algorithm; the parametric inner problems are maximized with a
self-contained log-barrier Newton method (the subproblems have at most a
handful of variables, so no external solver is needed).  The power-splitting
step has a closed form: the largest factor for which the harvesting balance
still holds, at which the EH constraint is exactly active.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Callable, Optional, Sequence

import numpy as np
from scipy.optimize import minimize as _nm_minimize

from .model import NetworkConfig, ChannelRealization, Spectra, channel_spectra
from .objective import (
    LN2,
    SpectrumPoint,
    PrecoderSet,
    ConstraintReport,
    check_feasibility,
    energy_efficiency,
    rate_tr1,
    rate_tr2,
)

__all__ = [
    "SolverOptions",
    "SolverTrace",
    "TraceRow",
    "Solution",
    "InfeasibleError",
    "EnergyHarvestInfeasible",
    "FractionalSubproblem",
    "DinkelbachResult",
    "assemble_precoders",
    "optimal_alpha",
    "solve_inner",
    "dinkelbach",
    "optimize_relay_spectrum",
    "optimize_transceiver_spectra",
    "alternate",
    "multistart",
    "find_feasible_point",
    "mapping_diagnostics",
    "initial_point",
    "random_point",
]

ALPHA_MIN = 1e-6


class InfeasibleError(RuntimeError):
    """No feasible point exists (or none was found by phase-I)."""


class EnergyHarvestInfeasible(InfeasibleError):
    """Harvestable power cannot cover the harvesting node's consumption."""


@dataclass(frozen=True)
class SolverOptions:
    dinkelbach_tol: float = 1e-6
    inner_tol: float = 1e-7
    barrier_mu0: float = 1.0
    barrier_shrink: float = 0.2
    max_outer_iters: int = 200
    max_dinkelbach_iters: int = 50
    alt_tol: float = 1e-6
    rng_seed: int = 0

    def __post_init__(self):
        for name in ("dinkelbach_tol", "inner_tol", "barrier_mu0", "alt_tol"):
            if getattr(self, name) <= 0.0:
                raise ValueError(f"{name} must be positive")
        if not 0.0 < self.barrier_shrink < 1.0:
            raise ValueError("barrier_shrink must lie in (0, 1)")

    def with_updates(self, **kwargs) -> "SolverOptions":
        return replace(self, **kwargs)


_OPT_FIELDS = set(SolverOptions.__dataclass_fields__)
_OPT_INT_FIELDS = {"max_outer_iters", "max_dinkelbach_iters", "rng_seed"}


def options_from_mapping(mapping: dict[str, str]) -> SolverOptions:
    """Build SolverOptions from ``solver.*`` keys of a flat config mapping."""
    kwargs = {}
    for key, value in mapping.items():
        if not key.startswith("solver."):
            continue
        name = key[len("solver."):]
        if name not in _OPT_FIELDS:
            raise ValueError(f"unknown solver option: {key}")
        kwargs[name] = int(value) if name in _OPT_INT_FIELDS else float(value)
    return SolverOptions(**kwargs)


@dataclass
class TraceRow:
    iteration: int
    ee: float
    alpha: float
    mu1: float
    mu2: float
    slack: float
    dinkelbach_iters_1: int
    dinkelbach_iters_2: int


@dataclass
class SolverTrace:
    rows: list[TraceRow] = field(default_factory=list)

    def ee_values(self) -> np.ndarray:
        return np.array([row.ee for row in self.rows])

    def total_dinkelbach_iters(self) -> int:
        return sum(r.dinkelbach_iters_1 + r.dinkelbach_iters_2 for r in self.rows)

    def to_csv(self, fh) -> None:
        fh.write("iteration,ee,alpha,mu1,mu2,slack\n")
        for r in self.rows:
            fh.write(
                f"{r.iteration},{r.ee:.12g},{r.alpha:.12g},"
                f"{r.mu1:.12g},{r.mu2:.12g},{r.slack:.12g}\n"
            )


@dataclass
class Solution:
    point: SpectrumPoint
    precoders: PrecoderSet
    ee: float
    rates: tuple[float, float]
    report: ConstraintReport
    trace: SolverTrace
    converged: bool
    kkt_residual: float = float("nan")


# --------------------------------------------------------------------------
# log-barrier Newton core
#
# Objectives and constraint sets are callables:
#   obj(x, derivs)  -> value                      (derivs=False)
#                   -> (value, grad, hess_diag)   (derivs=True)
#   cons(x, derivs) -> c                          (derivs=False)
#                   -> (c, J, Hdiag)              (derivs=True)
# where every Hessian involved is diagonal (the subproblems are separable
# sums of scalar logs plus linear terms), so the only dense coupling comes
# from the barrier's rank-one terms.
# --------------------------------------------------------------------------


def _newton_stage(obj, cons, x, tau, stage_tol, max_iter=60):
    gnorm = np.inf
    for _ in range(max_iter):
        v, g, hd = obj(x, True)
        c, J, Hd = cons(x, True)
        invc = 1.0 / c
        grad = g + tau * (J.T @ invc)
        gnorm = math.sqrt(float(grad @ grad))
        if gnorm < stage_tol:
            break
        H = np.diag(hd + tau * (Hd.T @ invc)) - tau * (J.T * invc**2) @ J
        try:
            d = np.linalg.solve(-H, grad)
        except np.linalg.LinAlgError:
            d = grad
        if float(d @ grad) <= 0.0:
            d = grad
        phi0 = v + tau * float(np.log(c).sum())
        slope = float(grad @ d)
        t = 1.0
        with np.errstate(invalid="ignore", divide="ignore"):
            for _ in range(40):
                xn = x + t * d
                cn = cons(xn, False)
                if np.all(cn > 0.0):
                    phin = obj(xn, False) + tau * float(np.log(cn).sum())
                    if phin >= phi0 + 0.25 * t * slope:
                        break
                t *= 0.5
            else:
                break  # line search stalled; tau stage done
        if phin - phi0 <= 1e-13 * (1.0 + abs(phi0)):
            x = xn
            break  # no measurable progress; tau stage done
        x = xn
    return x, gnorm


def _barrier_maximize(obj, cons, x0, opts: SolverOptions, tau0: float | None = None):
    """Maximize a concave objective over {x : c_j(x) > 0}.

    Returns (x, kkt_residual) where the residual is the gradient norm of the
    barrier-augmented objective at the final (smallest) barrier weight; it
    coincides with the Lagrangian stationarity residual with multiplier
    estimates tau / c_j.
    """
    x = np.asarray(x0, dtype=float).copy()
    c = cons(x, False)
    if np.any(c <= 0.0):
        raise ValueError("barrier start point is not strictly feasible")
    m = max(len(c), 1)
    tau = opts.barrier_mu0 if tau0 is None else tau0
    tau_min = opts.inner_tol / m
    while True:
        stage_tol = opts.inner_tol if tau <= tau_min else max(opts.inner_tol, 1e-2 * tau)
        x, gnorm = _newton_stage(obj, cons, x, tau, stage_tol)
        if tau <= tau_min:
            break
        tau = max(tau * opts.barrier_shrink, tau_min)
    return x, gnorm


def _phase1(cons, scales, x0, opts: SolverOptions):
    """Maximize the minimum normalized constraint slack (epigraph form).

    Returns (x, s) with s the achieved min normalized slack; s > 0 means a
    strictly feasible point for the original constraint set was found.
    """
    n = x0.size
    sc = np.asarray(scales, dtype=float)

    def obj(z, derivs=True):
        if not derivs:
            return z[-1]
        g = np.zeros(n + 1)
        g[-1] = 1.0
        return z[-1], g, np.zeros(n + 1)

    def cons2(z, derivs=True):
        x, s = z[:-1], z[-1]
        if not derivs:
            return cons(x, False) / sc - s
        c, J, Hd = cons(x, True)
        cn = c / sc - s
        Jn = np.hstack([J / sc[:, None], -np.ones((len(c), 1))])
        Hn = np.hstack([Hd / sc[:, None], np.zeros((len(c), 1))])
        return cn, Jn, Hn

    s0 = float(np.min(cons(x0, False) / sc)) - 1.0
    z0 = np.concatenate([x0, [s0]])
    p1_opts = opts.with_updates(inner_tol=max(opts.inner_tol, 1e-6))
    z, _ = _barrier_maximize(obj, cons2, z0, p1_opts)
    return z[:-1], float(np.min(cons(z[:-1], False) / sc))


# --------------------------------------------------------------------------
# fractional subproblems and Dinkelbach's algorithm
# --------------------------------------------------------------------------


@dataclass
class FractionalSubproblem:
    """max f(x)/g(x) over {x : c_j(x) >= 0}, f concave, g affine positive."""

    f: Callable
    g: Callable
    cons: Callable
    scales: np.ndarray
    x0: np.ndarray


@dataclass
class DinkelbachResult:
    x: np.ndarray
    mu: float
    iters: int
    mu_sequence: list[float]
    f_sequence: list[float]
    kkt_residual: float
    converged: bool


def _combined(f, g, mu):
    def obj(x, derivs=True):
        if not derivs:
            return f(x, False) - mu * g(x, False)
        fv, fg, fh = f(x, True)
        gv, gg, gh = g(x, True)
        return fv - mu * gv, fg - mu * gg, fh - mu * gh
    return obj


def solve_inner(mu: float, sub: FractionalSubproblem, opts: SolverOptions,
                x0: np.ndarray | None = None, tau0: float | None = None):
    """One parametric solve: maximize f(x) - mu g(x) over the feasible set."""
    start = sub.x0 if x0 is None else x0
    return _barrier_maximize(_combined(sub.f, sub.g, mu), sub.cons, start, opts, tau0=tau0)


def _interior_start(sub: FractionalSubproblem, opts: SolverOptions):
    """Find a strictly feasible start, running phase-I if needed.

    Returns (x, degenerate) where degenerate=True flags a feasible set with
    empty interior (a single boundary point); raises InfeasibleError when no
    feasible point exists.
    """
    c0 = sub.cons(sub.x0, False)
    s0 = float(np.min(c0 / sub.scales))
    if s0 > 1e-10:
        return sub.x0, False
    x, s = _phase1(sub.cons, sub.scales, sub.x0, opts)
    if s > 1e-10:
        return x, False
    if s > -1e-9:
        return x, True
    if s0 > -1e-9:
        # phase-I stalled but the incoming point already sits on the boundary
        return sub.x0, True
    raise InfeasibleError("no strictly feasible point for inner subproblem")


def dinkelbach(sub: FractionalSubproblem, opts: SolverOptions, mu0: float = 0.0,
               tau0_first: float | None = None) -> DinkelbachResult:
    """Fractional programming by parametric root finding.

    Iterates x = argmax {f - mu g}, mu <- f(x)/g(x) until the parametric
    optimum F(mu) drops below the tolerance.  The mu sequence is increasing
    and F decreasing; mu converges to the maximum of f/g.
    """
    x, degenerate = _interior_start(sub, opts)
    if degenerate:
        fv, gv = sub.f(x, False), sub.g(x, False)
        return DinkelbachResult(x, fv / gv, 0, [fv / gv], [0.0], 0.0, True)

    mu = mu0
    mus: list[float] = []
    fs: list[float] = []
    kkt = float("nan")
    converged = False
    iters = 0
    for it in range(opts.max_dinkelbach_iters):
        tau0 = tau0_first if it == 0 else 1e-2 * opts.barrier_mu0
        x, kkt = solve_inner(mu, sub, opts, x0=x, tau0=tau0)
        fv, gv = sub.f(x, False), sub.g(x, False)
        big_f = fv - mu * gv
        mus.append(mu)
        fs.append(big_f)
        iters = it + 1
        if big_f <= opts.dinkelbach_tol:
            converged = True
            mu = fv / gv
            break
        mu = fv / gv
    return DinkelbachResult(x, mu, iters, mus, fs, kkt, converged)


# --------------------------------------------------------------------------
# problem-specific pieces
# --------------------------------------------------------------------------


def _fit(v: np.ndarray, n: int) -> np.ndarray:
    v = np.asarray(v, dtype=float)
    if v.size >= n:
        return v[:n]
    return np.concatenate([v, np.zeros(n - v.size)])


def optimal_alpha(
    lambda_q1: np.ndarray,
    lambda_q2: np.ndarray,
    lambda_qr: np.ndarray,
    spectra: Spectra,
    config: NetworkConfig,
    alpha_min: float = ALPHA_MIN,
) -> float:
    """Closed-form power-splitting factor: EH balance holds with equality.

    Raises EnergyHarvestInfeasible when the harvestable power cannot cover
    the harvesting node's consumption at any splitting factor.
    """
    nr = config.nr
    a = _fit(spectra.lambda_h1, nr)
    b = _fit(spectra.lambda_h2, nr)
    p = _fit(lambda_q1, nr)
    q = _fit(lambda_q2, nr)
    r = _fit(lambda_qr, nr)
    need = float(np.sum(lambda_q1)) + config.p1_cr + config.p1_ct
    collected = float(np.sum(a * r * (q * b + p * a + config.sigma2_r))) + config.sigma2_1
    denom = config.eh_efficiency * collected
    if denom <= 0.0:
        raise EnergyHarvestInfeasible("no harvestable power at these spectra")
    raw = 1.0 - need / denom
    if raw <= 0.0:
        raise EnergyHarvestInfeasible(
            f"harvest balance unattainable (required {need:.6g} W, "
            f"collectible {denom:.6g} W)"
        )
    return float(np.clip(raw, alpha_min, 1.0 - alpha_min))


def assemble_precoders(pt: SpectrumPoint, ch: ChannelRealization) -> PrecoderSet:
    """Build the precoder matrices from a spectrum point via the closed-form
    unitaries (transceiver covariances aligned with the channel right
    unitaries, relay precoder diagonal in the shared left unitary)."""
    v1, v2, u = ch.v_h1, ch.v_h2, ch.u_h
    q1 = (v1 * pt.lambda_q1) @ v1.conj().T
    q2 = (v2 * pt.lambda_q2) @ v2.conj().T
    qr = (u * np.sqrt(pt.lambda_qr)) @ u.conj().T
    f1 = (v1 * np.sqrt(pt.lambda_q1)) @ v1.conj().T
    f2 = (v2 * np.sqrt(pt.lambda_q2)) @ v2.conj().T
    return PrecoderSet(q1=q1, q2=q2, qr=qr, f1=f1, f2=f2,
                       exact=ch.shared_left_unitary)


def _relay_subproblem(
    p: np.ndarray,
    q: np.ndarray,
    alpha: float,
    spectra: Spectra,
    config: NetworkConfig,
    r0: np.ndarray,
    include_eh: bool = True,
) -> FractionalSubproblem:
    """Fractional program in the relay spectrum with everything else fixed."""
    nr = config.nr
    a = _fit(spectra.lambda_h1, nr)
    b = _fit(spectra.lambda_h2, nr)
    pp = _fit(p, nr)
    qq = _fit(q, nr)
    s2r = config.sigma2_r

    c1 = config.sigma2_d + alpha * config.sigma2_1
    c2 = config.sigma2_2
    v1 = alpha * a * (s2r + b * qq)
    w1 = alpha * s2r * a
    v2 = b * (s2r + a * pp)
    w2 = s2r * b
    k = qq * b + pp * a + s2r
    g_const = float(np.sum(p)) / config.xi_1 + float(np.sum(q)) / config.xi_2 + config.pc_total
    half = 0.5 / LN2

    def _rate(x, v, w, c):
        return half * float((np.log(c + v * x) - np.log(c + w * x)).sum())

    def _rate_derivs(x, v, w, c):
        rv = v / (c + v * x)
        rw = w / (c + w * x)
        val = half * float((np.log1p((v - w) * x / (c + w * x))).sum())
        grad = half * (rv - rw)
        hd = -half * (rv * rv - rw * rw)
        return val, grad, hd

    def f(x, derivs=True):
        if not derivs:
            return _rate(x, v1, w1, c1) + _rate(x, v2, w2, c2)
        val1, g1, h1 = _rate_derivs(x, v1, w1, c1)
        val2, g2, h2 = _rate_derivs(x, v2, w2, c2)
        return val1 + val2, g1 + g2, h1 + h2

    kg = k / config.xi_r

    def g(x, derivs=True):
        val = float(kg @ x) + g_const
        if not derivs:
            return val
        return val, kg.copy(), np.zeros(nr)

    eh_gain = config.eh_efficiency * (1.0 - alpha)
    eh_coef = eh_gain * a * k
    eh_base = eh_gain * config.sigma2_1 - (
        float(np.sum(p)) + config.p1_cr + config.p1_ct
    )
    rt_half = config.rt_min / 2.0
    use_rate_cons = config.rt_min > 0.0

    # static constraint rows: bounds, relay power cap, (EH); rate rows vary
    rows_static = [np.eye(nr), -k[None, :]]
    if include_eh:
        rows_static.append(eh_coef[None, :])
    j_static = np.vstack(rows_static)
    n_static = j_static.shape[0]
    m = n_static + (2 if use_rate_cons else 0)
    i_eh = nr + 1
    i_rt = n_static

    def cons(x, derivs=True):
        c = np.empty(m)
        c[:nr] = x
        c[nr] = config.pr_max - float(k @ x)
        if include_eh:
            c[i_eh] = float(eh_coef @ x) + eh_base
        if not derivs:
            if use_rate_cons:
                c[i_rt] = _rate(x, v1, w1, c1) - rt_half
                c[i_rt + 1] = _rate(x, v2, w2, c2) - rt_half
            return c
        J = np.zeros((m, nr))
        J[:n_static] = j_static
        Hd = np.zeros((m, nr))
        if use_rate_cons:
            val1, gr1, hd1 = _rate_derivs(x, v1, w1, c1)
            val2, gr2, hd2 = _rate_derivs(x, v2, w2, c2)
            c[i_rt] = val1 - rt_half
            c[i_rt + 1] = val2 - rt_half
            J[i_rt] = gr1
            J[i_rt + 1] = gr2
            Hd[i_rt] = hd1
            Hd[i_rt + 1] = hd2
        return c, J, Hd

    scales = [np.ones(nr), [max(1.0, config.pr_max)]]
    if include_eh:
        scales.append([max(1.0, -eh_base + eh_gain * config.sigma2_1)])
    if use_rate_cons:
        scales.append([max(1.0, rt_half)] * 2)
    return FractionalSubproblem(
        f=f, g=g, cons=cons,
        scales=np.concatenate([np.asarray(s, dtype=float).ravel() for s in scales]),
        x0=np.asarray(r0, dtype=float).copy(),
    )


def _transceiver_subproblem(
    r: np.ndarray,
    alpha: float,
    spectra: Spectra,
    config: NetworkConfig,
    p0: np.ndarray,
    q0: np.ndarray,
    include_eh: bool = True,
) -> FractionalSubproblem:
    """Joint fractional program in both transceiver spectra, relay fixed."""
    nr, n1, n2 = config.nr, config.n1, config.n2
    a = _fit(spectra.lambda_h1, nr)
    b = _fit(spectra.lambda_h2, nr)
    rr = _fit(r, nr)
    s2r = config.sigma2_r
    c1 = config.sigma2_d + alpha * config.sigma2_1
    c2 = config.sigma2_2
    half = 0.5 / LN2

    # per-coordinate slope of the log argument; zero beyond the relay modes
    coef_q = _fit(alpha * a * b * rr / (c1 + alpha * s2r * a * rr), n2)
    coef_p = _fit(a * b * rr / (c2 + s2r * b * rr), n1)

    def _sumlog(x, coef):
        return half * float(np.log1p(coef * x).sum())

    def _sumlog_derivs(x, coef):
        r = coef / (1.0 + coef * x)
        return (
            half * float(np.log1p(coef * x).sum()),
            half * r,
            -half * r * r,
        )

    def f(x, derivs=True):
        p, q = x[:n1], x[n1:]
        if not derivs:
            return _sumlog(p, coef_p) + _sumlog(q, coef_q)
        vp, gp, hp = _sumlog_derivs(p, coef_p)
        vq, gq, hq = _sumlog_derivs(q, coef_q)
        return vp + vq, np.concatenate([gp, gq]), np.concatenate([hp, hq])

    arp = _fit(a * rr, n1)  # relay power slope in p
    brq = _fit(b * rr, n2)
    g_lin = np.concatenate([1.0 / config.xi_1 + arp / config.xi_r,
                            1.0 / config.xi_2 + brq / config.xi_r])
    g_const = s2r * float(np.sum(rr)) / config.xi_r + config.pc_total

    def g(x, derivs=True):
        val = float(g_lin @ x) + g_const
        if not derivs:
            return val
        return val, g_lin.copy(), np.zeros(n1 + n2)

    relay_base = config.pr_max - s2r * float(np.sum(rr))
    relay_lin = np.concatenate([arp, brq])

    eh_gain = config.eh_efficiency * (1.0 - alpha)
    eh_lin = np.concatenate([
        eh_gain * _fit(a * a * rr, n1) - 1.0,
        eh_gain * _fit(a * b * rr, n2),
    ])
    eh_base = eh_gain * (s2r * float(np.sum(a * rr)) + config.sigma2_1) - (
        config.p1_cr + config.p1_ct
    )
    rt_half = config.rt_min / 2.0
    use_rate_cons = config.rt_min > 0.0
    n = n1 + n2
    sum_p = np.concatenate([np.ones(n1), np.zeros(n2)])
    sum_q = np.concatenate([np.zeros(n1), np.ones(n2)])

    # static constraint rows: bounds, the three power caps, (EH); rates vary
    rows_static = [np.eye(n), np.vstack([-sum_p, -sum_q, -relay_lin])]
    if include_eh:
        rows_static.append(eh_lin[None, :])
    j_static = np.vstack(rows_static)
    n_static = j_static.shape[0]
    m = n_static + (2 if use_rate_cons else 0)
    i_eh = n + 3
    i_rt = n_static

    def cons(x, derivs=True):
        p, q = x[:n1], x[n1:]
        c = np.empty(m)
        c[:n] = x
        c[n] = config.p1_max - float(p.sum())
        c[n + 1] = config.p2_max - float(q.sum())
        c[n + 2] = relay_base - float(relay_lin @ x)
        if include_eh:
            c[i_eh] = float(eh_lin @ x) + eh_base
        if not derivs:
            if use_rate_cons:
                c[i_rt] = _sumlog(q, coef_q) - rt_half
                c[i_rt + 1] = _sumlog(p, coef_p) - rt_half
            return c
        J = np.zeros((m, n))
        J[:n_static] = j_static
        Hd = np.zeros((m, n))
        if use_rate_cons:
            v1, gq1, hq1 = _sumlog_derivs(q, coef_q)
            v2, gp2, hp2 = _sumlog_derivs(p, coef_p)
            c[i_rt] = v1 - rt_half
            c[i_rt + 1] = v2 - rt_half
            J[i_rt, n1:] = gq1
            J[i_rt + 1, :n1] = gp2
            Hd[i_rt, n1:] = hq1
            Hd[i_rt + 1, :n1] = hp2
        return c, J, Hd

    scales = [np.ones(n), [max(1.0, config.p1_max), max(1.0, config.p2_max),
                           max(1.0, config.pr_max)]]
    if include_eh:
        scales.append([max(1.0, config.p1_cr + config.p1_ct, 1.0)])
    if use_rate_cons:
        scales.append([max(1.0, rt_half)] * 2)
    return FractionalSubproblem(
        f=f, g=g, cons=cons,
        scales=np.concatenate([np.asarray(s, dtype=float).ravel() for s in scales]),
        x0=np.concatenate([np.asarray(p0, float), np.asarray(q0, float)]),
    )


def optimize_relay_spectrum(
    state: SpectrumPoint,
    ch: ChannelRealization,
    config: NetworkConfig,
    opts: SolverOptions,
    *,
    include_eh: bool = True,
    mu0: float = 0.0,
    tau0_first: float | None = None,
) -> tuple[np.ndarray, DinkelbachResult | None]:
    """Dinkelbach step over the relay spectrum; other variables fixed."""
    spectra = channel_spectra(ch)
    nr = config.nr
    if float(np.sum(_fit(state.lambda_q1, nr))) == 0.0 and \
       float(np.sum(_fit(state.lambda_q2, nr))) == 0.0:
        # zero rate everywhere; tie-break toward least relay power
        zero = SpectrumPoint(state.alpha, state.lambda_q1, state.lambda_q2, np.zeros(nr))
        rep = check_feasibility(zero, spectra, config, ignore_eh=not include_eh)
        if rep.feasible:
            return np.zeros(nr), None
        return np.asarray(state.lambda_qr, float).copy(), None
    sub = _relay_subproblem(state.lambda_q1, state.lambda_q2, state.alpha,
                            spectra, config, state.lambda_qr, include_eh=include_eh)
    res = dinkelbach(sub, opts, mu0=mu0, tau0_first=tau0_first)
    return np.maximum(res.x, 0.0), res


def optimize_transceiver_spectra(
    state: SpectrumPoint,
    ch: ChannelRealization,
    config: NetworkConfig,
    opts: SolverOptions,
    *,
    include_eh: bool = True,
    mu0: float = 0.0,
    tau0_first: float | None = None,
) -> tuple[np.ndarray, np.ndarray, DinkelbachResult | None]:
    """Joint Dinkelbach step over both transceiver spectra; relay fixed."""
    spectra = channel_spectra(ch)
    sub = _transceiver_subproblem(state.lambda_qr, state.alpha, spectra, config,
                                  state.lambda_q1, state.lambda_q2,
                                  include_eh=include_eh)
    res = dinkelbach(sub, opts, mu0=mu0, tau0_first=tau0_first)
    n1 = config.n1
    x = np.maximum(res.x, 0.0)
    return x[:n1], x[n1:], res


# --------------------------------------------------------------------------
# feasibility search
# --------------------------------------------------------------------------


def initial_point(spectra: Spectra, config: NetworkConfig,
                  *, alpha_fixed: float | None = None,
                  include_eh: bool = True) -> SpectrumPoint:
    """Deterministic start: best feasible point on a coarse scaled-power grid.

    Candidates are uniform power loads at a few fractions of the caps (plus
    strongest-mode-only relay loads), each paired with its closed-form
    splitting factor; the feasible candidate with the highest EE wins.  Falls
    back to a half-power pattern when the grid contains no feasible point.
    """
    nr = config.nr
    a = _fit(spectra.lambda_h1, nr)
    b = _fit(spectra.lambda_h2, nr)

    def build(t1, t2, tr, mode=None):
        p = np.full(config.n1, t1 * config.p1_max / config.n1)
        q = np.full(config.n2, t2 * config.p2_max / config.n2)
        k = _fit(q, nr) * b + _fit(p, nr) * a + config.sigma2_r
        if mode is None:
            r = np.full(nr, tr * config.pr_max / float(np.sum(k)))
        else:
            r = np.zeros(nr)
            r[mode] = tr * config.pr_max / k[mode]
        if alpha_fixed is not None:
            alpha = alpha_fixed
        else:
            try:
                alpha = optimal_alpha(p, q, r, spectra, config)
            except EnergyHarvestInfeasible:
                if include_eh:
                    return None
                alpha = 1.0 - ALPHA_MIN
        return SpectrumPoint(alpha=alpha, lambda_q1=p, lambda_q2=q, lambda_qr=r)

    best_mode = int(np.argmax(a * b)) if nr > 1 else None
    best_pt, best_ee = None, -np.inf
    fractions = (0.999, 0.5, 0.25)
    for t1 in fractions:
        for t2 in fractions:
            for tr in fractions:
                for mode in ({None, best_mode} if nr > 1 else {None}):
                    pt = build(t1, t2, tr, mode)
                    if pt is None:
                        continue
                    if not check_feasibility(pt, spectra, config,
                                             ignore_eh=not include_eh).feasible:
                        continue
                    ee = energy_efficiency(pt, spectra, config)
                    if ee > best_ee:
                        best_pt, best_ee = pt, ee
    if best_pt is not None:
        return best_pt

    p = np.full(config.n1, config.p1_max / (2.0 * config.n1))
    q = np.full(config.n2, config.p2_max / (2.0 * config.n2))
    k = _fit(q, nr) * b + _fit(p, nr) * a + config.sigma2_r
    r = np.full(nr, config.pr_max / (2.0 * float(np.sum(k))))
    if alpha_fixed is not None:
        alpha = alpha_fixed
    else:
        try:
            alpha = optimal_alpha(p, q, r, spectra, config)
        except EnergyHarvestInfeasible:
            alpha = 0.5
    return SpectrumPoint(alpha=alpha, lambda_q1=p, lambda_q2=q, lambda_qr=r)


def random_point(spectra: Spectra, config: NetworkConfig,
                 rng: np.random.Generator,
                 *, alpha_fixed: float | None = None) -> SpectrumPoint:
    """Random interior point with powers drawn uniformly below the caps."""
    nr = config.nr
    p = rng.uniform(0.0, 1.0, config.n1)
    p *= rng.uniform(0.05, 0.95) * config.p1_max / max(float(np.sum(p)), 1e-12)
    q = rng.uniform(0.0, 1.0, config.n2)
    q *= rng.uniform(0.05, 0.95) * config.p2_max / max(float(np.sum(q)), 1e-12)
    a = _fit(spectra.lambda_h1, nr)
    b = _fit(spectra.lambda_h2, nr)
    k = _fit(q, nr) * b + _fit(p, nr) * a + config.sigma2_r
    r = rng.uniform(0.0, 1.0, nr)
    budget = rng.uniform(0.05, 0.95) * config.pr_max
    r *= budget / max(float(np.sum(r * k)), 1e-12)
    if alpha_fixed is not None:
        alpha = alpha_fixed
    else:
        try:
            alpha = optimal_alpha(p, q, r, spectra, config)
        except EnergyHarvestInfeasible:
            alpha = float(rng.uniform(0.1, 0.9))
    return SpectrumPoint(alpha=alpha, lambda_q1=p, lambda_q2=q, lambda_qr=r)


def _candidate_points(spectra: Spectra, config: NetworkConfig,
                      include_eh: bool, alpha_fixed: float | None,
                      fixed_relay: np.ndarray | None):
    """Deterministic grid of scaled power patterns used to seed phase-I."""
    nr = config.nr
    a = _fit(spectra.lambda_h1, nr)
    b = _fit(spectra.lambda_h2, nr)
    fractions = (1.0, 0.5, 0.2, 0.05, 0.01)
    best_mode = int(np.argmax(a * b)) if nr > 1 else 0
    for t1 in fractions:
        p = np.full(config.n1, t1 * config.p1_max / config.n1)
        for t2 in fractions:
            q = np.full(config.n2, t2 * config.p2_max / config.n2)
            k = _fit(q, nr) * b + _fit(p, nr) * a + config.sigma2_r
            if fixed_relay is not None:
                r_list = [np.asarray(fixed_relay, float)]
            else:
                r_list = []
                for tr in fractions:
                    r = np.full(nr, tr * config.pr_max / float(np.sum(k)))
                    r_list.append(r)
                    if nr > 1:
                        rc = np.zeros(nr)
                        rc[best_mode] = tr * config.pr_max / k[best_mode]
                        r_list.append(rc)
            for r in r_list:
                if alpha_fixed is not None:
                    alpha = alpha_fixed
                else:
                    try:
                        alpha = optimal_alpha(p, q, r, spectra, config)
                    except EnergyHarvestInfeasible:
                        if include_eh:
                            continue
                        alpha = 1.0 - ALPHA_MIN
                yield SpectrumPoint(alpha=alpha, lambda_q1=p, lambda_q2=q, lambda_qr=r)


def _min_slack(pt: SpectrumPoint, spectra: Spectra, config: NetworkConfig,
               include_eh: bool) -> float:
    rep = check_feasibility(pt, spectra, config, ignore_eh=not include_eh)
    slacks = [
        rep.power_tr1 / max(1.0, config.p1_max),
        rep.power_tr2 / max(1.0, config.p2_max),
        rep.power_relay / max(1.0, config.pr_max),
        rep.rate_tr1 / max(1.0, config.rt_min / 2.0),
        rep.rate_tr2 / max(1.0, config.rt_min / 2.0),
    ]
    if include_eh:
        slacks.append(rep.eh_balance)
    return min(slacks)


def find_feasible_point(
    ch: ChannelRealization,
    config: NetworkConfig,
    opts: SolverOptions,
    init: SpectrumPoint | None = None,
    *,
    include_eh: bool = True,
    alpha_fixed: float | None = None,
    fixed_relay: np.ndarray | None = None,
) -> Optional[SpectrumPoint]:
    """Search for a feasible spectrum point; None when none is found.

    Strategy: deterministic candidate grid first, then alternating phase-I
    (max-min-slack) rounds over the relay and transceiver blocks with the
    splitting factor refreshed from its closed form between rounds.
    """
    spectra = channel_spectra(ch)
    best: SpectrumPoint | None = None
    best_slack = -np.inf

    def consider(pt: SpectrumPoint):
        nonlocal best, best_slack
        s = _min_slack(pt, spectra, config, include_eh)
        if s > best_slack:
            best, best_slack = pt, s
        return s

    if init is not None:
        if consider(init) >= -1e-10:
            return init
    for cand in _candidate_points(spectra, config, include_eh, alpha_fixed, fixed_relay):
        if consider(cand) >= -1e-10:
            return cand

    if best is None:
        # every candidate was EH-infeasible before phase-I could start
        return None

    # alternating phase-I polish from the best candidate
    pt = best
    p1_opts = opts.with_updates(inner_tol=1e-6)
    for _ in range(4):
        if fixed_relay is None:
            sub = _relay_subproblem(pt.lambda_q1, pt.lambda_q2, pt.alpha,
                                    spectra, config, np.maximum(pt.lambda_qr, 1e-9),
                                    include_eh=include_eh)
            r, _s = _phase1(sub.cons, sub.scales, sub.x0, p1_opts)
            pt = SpectrumPoint(pt.alpha, pt.lambda_q1, pt.lambda_q2, np.maximum(r, 0.0))
        sub = _transceiver_subproblem(pt.lambda_qr, pt.alpha, spectra, config,
                                      np.maximum(pt.lambda_q1, 1e-9),
                                      np.maximum(pt.lambda_q2, 1e-9),
                                      include_eh=include_eh)
        x, _s = _phase1(sub.cons, sub.scales, sub.x0, p1_opts)
        pt = SpectrumPoint(pt.alpha, np.maximum(x[:config.n1], 0.0),
                           np.maximum(x[config.n1:], 0.0), pt.lambda_qr)
        if alpha_fixed is None:
            try:
                alpha = optimal_alpha(pt.lambda_q1, pt.lambda_q2, pt.lambda_qr,
                                      spectra, config)
                pt = SpectrumPoint(alpha, pt.lambda_q1, pt.lambda_q2, pt.lambda_qr)
            except EnergyHarvestInfeasible:
                pass
        if consider(pt) >= -1e-10:
            return pt
    return None


# --------------------------------------------------------------------------
# the alternating algorithm
# --------------------------------------------------------------------------


def _joint_polish(
    pt: SpectrumPoint,
    spectra: Spectra,
    config: NetworkConfig,
    *,
    include_eh: bool,
    alpha_fixed: float | None,
    relay_fixed: np.ndarray | None,
) -> SpectrumPoint | None:
    """Derivative-free local ascent over all spectra jointly.

    Block-coordinate ascent can stall where an active shared constraint
    (relay power or harvesting balance) couples the blocks; a joint move
    along that boundary then still improves the EE.  This polish runs a
    penalized Nelder-Mead search over the concatenated spectra with the
    splitting factor at its closed form, and returns a strictly better
    feasible point or None.  Deterministic.
    """
    n1, n2 = config.n1, config.n2
    parts = [pt.lambda_q1, pt.lambda_q2]
    if relay_fixed is None:
        parts.append(pt.lambda_qr)
    z0 = np.concatenate([np.asarray(v, float) for v in parts])
    ee0 = energy_efficiency(pt, spectra, config)

    def build(z):
        z = np.maximum(z, 0.0)
        p, q = z[:n1], z[n1:n1 + n2]
        r = np.asarray(relay_fixed, float) if relay_fixed is not None else z[n1 + n2:]
        if alpha_fixed is not None:
            alpha = alpha_fixed
        else:
            try:
                alpha = optimal_alpha(p, q, r, spectra, config)
            except EnergyHarvestInfeasible:
                return None
        return SpectrumPoint(alpha, p, q, r)

    def neg(z):
        pen = float(np.maximum(-z, 0.0).sum())
        cand = build(z)
        if cand is None:
            return 1e3 * (1.0 + pen)
        rep = check_feasibility(cand, spectra, config, ignore_eh=not include_eh)
        viol = pen
        for s in (rep.power_tr1, rep.power_tr2, rep.power_relay,
                  rep.rate_tr1, rep.rate_tr2):
            viol += max(0.0, -s)
        if include_eh and alpha_fixed is not None:
            viol += max(0.0, -rep.eh_balance)
        if viol > 0.0:
            return 1e3 * viol
        return -energy_efficiency(cand, spectra, config)

    res = _nm_minimize(neg, z0, method="Nelder-Mead",
                       options={"maxiter": 500 * z0.size,
                                "xatol": 1e-9, "fatol": 1e-12})
    cand = build(res.x)
    if cand is None:
        return None
    rep = check_feasibility(cand, spectra, config, ignore_eh=not include_eh)
    if not rep.feasible:
        return None
    if energy_efficiency(cand, spectra, config) <= ee0:
        return None
    return cand


def alternate(
    ch: ChannelRealization,
    config: NetworkConfig,
    opts: SolverOptions,
    init: SpectrumPoint | None = None,
    *,
    include_eh: bool = True,
    alpha_fixed: float | None = None,
    relay_spectrum_fixed: np.ndarray | None = None,
) -> Solution:
    """Alternating maximization: relay block, transceiver block, PS factor.

    Every block is a global maximization of the EE over its own variables
    with the rest fixed, so the EE trace is nondecreasing.  Stops on relative
    EE change below ``alt_tol``.  Raises InfeasibleError when no feasible
    point exists; returns converged=False when the iteration cap is hit.

    ``include_eh=False`` drops the harvesting constraint (no-EH baseline,
    splitting factor pinned near 1), ``relay_spectrum_fixed`` pins the relay
    eigenvalues (no-relay-precoding baseline).
    """
    spectra = channel_spectra(ch)
    if alpha_fixed is None and not include_eh:
        alpha_fixed = 1.0 - ALPHA_MIN

    pt = init if init is not None else initial_point(
        spectra, config, alpha_fixed=alpha_fixed, include_eh=include_eh)
    if relay_spectrum_fixed is not None:
        pt = SpectrumPoint(pt.alpha, pt.lambda_q1, pt.lambda_q2,
                           np.asarray(relay_spectrum_fixed, dtype=float))
    if not check_feasibility(pt, spectra, config, ignore_eh=not include_eh).feasible:
        repaired = find_feasible_point(
            ch, config, opts, init=pt,
            include_eh=include_eh, alpha_fixed=alpha_fixed,
            fixed_relay=relay_spectrum_fixed,
        )
        if repaired is None:
            rep = check_feasibility(pt, spectra, config, ignore_eh=not include_eh)
            names = ["power_tr1", "power_tr2", "power_relay",
                     "rate_tr1", "rate_tr2", "eh_balance"]
            slacks = [rep.power_tr1, rep.power_tr2, rep.power_relay,
                      rep.rate_tr1, rep.rate_tr2, rep.eh_balance]
            if not include_eh:
                names, slacks = names[:-1], slacks[:-1]
            worst = min(range(len(slacks)), key=lambda i: slacks[i])
            raise InfeasibleError(
                f"no feasible spectrum point found; most violated constraint: "
                f"{names[worst]} (slack {slacks[worst]:.3g})")
        pt = repaired

    ee = energy_efficiency(pt, spectra, config)
    trace = SolverTrace()
    converged = False
    kkt = float("nan")

    for n in range(1, opts.max_outer_iters + 1):
        ee_prev = ee
        mu1 = mu2 = float("nan")
        d1 = d2 = 0
        # later sweeps start near the previous block optimum, so the barrier
        # continuation can begin from a much smaller weight
        warm_tau = None if n == 1 else 1e-2 * opts.barrier_mu0

        if relay_spectrum_fixed is None:
            r_new, res1 = optimize_relay_spectrum(pt, ch, config, opts,
                                                  include_eh=include_eh, mu0=ee,
                                                  tau0_first=warm_tau)
            cand = SpectrumPoint(pt.alpha, pt.lambda_q1, pt.lambda_q2, r_new)
            ee_cand = energy_efficiency(cand, spectra, config)
            if ee_cand >= ee - 1e-12:
                pt, ee = cand, ee_cand
            if res1 is not None:
                mu1, d1, kkt = res1.mu, res1.iters, res1.kkt_residual

        pq_new = optimize_transceiver_spectra(pt, ch, config, opts,
                                              include_eh=include_eh, mu0=ee,
                                              tau0_first=warm_tau)
        p_new, q_new, res2 = pq_new
        cand = SpectrumPoint(pt.alpha, p_new, q_new, pt.lambda_qr)
        ee_cand = energy_efficiency(cand, spectra, config)
        if ee_cand >= ee - 1e-12:
            pt, ee = cand, ee_cand
        if res2 is not None:
            mu2, d2, kkt = res2.mu, res2.iters, res2.kkt_residual

        if alpha_fixed is None:
            try:
                alpha = optimal_alpha(pt.lambda_q1, pt.lambda_q2, pt.lambda_qr,
                                      spectra, config)
            except EnergyHarvestInfeasible:
                alpha = pt.alpha
            cand = SpectrumPoint(alpha, pt.lambda_q1, pt.lambda_q2, pt.lambda_qr)
            ee_cand = energy_efficiency(cand, spectra, config)
            if ee_cand >= ee - 1e-12:
                pt, ee = cand, ee_cand

        slack = _min_slack(pt, spectra, config, include_eh)
        trace.rows.append(TraceRow(
            iteration=n, ee=ee, alpha=pt.alpha, mu1=mu1, mu2=mu2,
            slack=slack, dinkelbach_iters_1=d1, dinkelbach_iters_2=d2,
        ))
        if abs(ee - ee_prev) <= opts.alt_tol * max(abs(ee), 1e-12):
            polished = _joint_polish(pt, spectra, config, include_eh=include_eh,
                                     alpha_fixed=alpha_fixed,
                                     relay_fixed=relay_spectrum_fixed)
            if polished is not None:
                ee_new = energy_efficiency(polished, spectra, config)
                if ee_new > ee * (1.0 + opts.alt_tol):
                    # escaped a blockwise stall; resume the block sweeps
                    pt, ee = polished, ee_new
                    continue
                if ee_new > ee:
                    pt, ee = polished, ee_new
                    row = trace.rows[-1]
                    row.ee, row.alpha = ee, pt.alpha
            converged = True
            break

    report = check_feasibility(pt, spectra, config, ignore_eh=not include_eh)
    return Solution(
        point=pt,
        precoders=assemble_precoders(pt, ch),
        ee=ee,
        rates=(rate_tr1(pt, spectra, config), rate_tr2(pt, spectra, config)),
        report=report,
        trace=trace,
        converged=converged and report.feasible,
        kkt_residual=kkt,
    )


def multistart(
    ch: ChannelRealization,
    config: NetworkConfig,
    opts: SolverOptions,
    k: int = 1,
    *,
    include_eh: bool = True,
) -> Solution:
    """Best of k alternation runs from independent seeded random starts.

    Start j is derived from (rng_seed, j), so start sets are nested in k and
    the best-of-k EE is nondecreasing in k for a fixed seed.
    """
    if k < 1:
        raise ValueError("k must be >= 1")
    spectra = channel_spectra(ch)
    best: Solution | None = None
    for j in range(k):
        if j == 0:
            init = None  # the default half-power start
        else:
            rng = np.random.default_rng([opts.rng_seed, j])
            init = random_point(spectra, config, rng)
        try:
            sol = alternate(ch, config, opts, init, include_eh=include_eh)
        except InfeasibleError:
            continue
        if best is None or sol.ee > best.ee:
            best = sol
    if best is None:
        raise InfeasibleError("all multistart runs were infeasible")
    return best


# --------------------------------------------------------------------------
# standard-mapping diagnostics for the splitting-factor update
# --------------------------------------------------------------------------


@dataclass
class MappingReport:
    alphas: list[float]
    feasible: list[bool]
    m_values: list[float]
    nonneg_violations: int
    monotonicity_violations: int
    scalability_violations: int
    beta: float


def _mapping_value(alpha: float, ch: ChannelRealization, config: NetworkConfig,
                   opts: SolverOptions) -> float | None:
    """One application of the splitting-factor mapping at a fixed alpha:
    optimize all spectra jointly (by block alternation), then return the
    unclamped closed-form update.  None when infeasible at this alpha."""
    spectra = channel_spectra(ch)
    pt = find_feasible_point(ch, config, opts, alpha_fixed=alpha)
    if pt is None:
        return None
    pt = SpectrumPoint(alpha, pt.lambda_q1, pt.lambda_q2, pt.lambda_qr)
    ee = energy_efficiency(pt, spectra, config)
    for _ in range(10):
        r_new, _ = optimize_relay_spectrum(pt, ch, config, opts, mu0=ee)
        cand = SpectrumPoint(alpha, pt.lambda_q1, pt.lambda_q2, r_new)
        if energy_efficiency(cand, spectra, config) >= ee - 1e-12:
            pt = cand
        p_new, q_new, _ = optimize_transceiver_spectra(pt, ch, config, opts, mu0=ee)
        cand = SpectrumPoint(alpha, p_new, q_new, pt.lambda_qr)
        ee_new = energy_efficiency(cand, spectra, config)
        if ee_new >= ee - 1e-12:
            pt = cand
        if abs(ee_new - ee) <= 1e-6 * max(abs(ee), 1e-12):
            ee = ee_new
            break
        ee = ee_new
    nr = config.nr
    a = _fit(spectra.lambda_h1, nr)
    b = _fit(spectra.lambda_h2, nr)
    p = _fit(pt.lambda_q1, nr)
    q = _fit(pt.lambda_q2, nr)
    r = _fit(pt.lambda_qr, nr)
    need = float(np.sum(pt.lambda_q1)) + config.p1_cr + config.p1_ct
    collected = float(np.sum(a * r * (q * b + p * a + config.sigma2_r))) + config.sigma2_1
    return 1.0 - need / (config.eh_efficiency * collected)


def mapping_diagnostics(
    ch: ChannelRealization,
    config: NetworkConfig,
    opts: SolverOptions,
    alphas: Sequence[float],
    beta: float = 1.5,
) -> MappingReport:
    """Empirically probe the three standard-mapping properties of the
    splitting-factor update on a grid of alphas (informational; the
    properties are only guaranteed at high SNR)."""
    alphas = sorted(float(a) for a in alphas)
    values: dict[float, float | None] = {}
    for a in alphas:
        values[a] = _mapping_value(a, ch, config, opts)

    feas = [values[a] is not None for a in alphas]
    m_vals = [values[a] if values[a] is not None else float("nan") for a in alphas]

    tol = 1e-9
    nonneg = sum(1 for v in m_vals if not math.isnan(v) and v < -tol)
    mono = 0
    prev = None
    for v in m_vals:
        if math.isnan(v):
            continue
        if prev is not None and v < prev - tol:
            mono += 1
        prev = v
    scal = 0
    for a in alphas:
        ma = values[a]
        if ma is None:
            continue
        ab = min(beta * a, 1.0 - ALPHA_MIN)
        mab = values.get(ab)
        if mab is None:
            mab = _mapping_value(ab, ch, config, opts)
            values[ab] = mab
        if mab is not None and beta * ma < mab - tol:
            scal += 1
    return MappingReport(
        alphas=list(alphas),
        feasible=feas,
        m_values=m_vals,
        nonneg_violations=nonneg,
        monotonicity_violations=mono,
        scalability_violations=scal,
        beta=beta,
    )
