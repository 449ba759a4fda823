"""Optimization engine: Dinkelbach, inner solver, alpha step, alternation."""

import math

import numpy as np
import pytest

from oracles import water_filling
from swiptrelay.model import NetworkConfig, Spectra, channel_spectra, generate_channels
from swiptrelay.objective import SpectrumPoint, check_feasibility, energy_efficiency
from swiptrelay.solver import (
    ALPHA_MIN,
    EnergyHarvestInfeasible,
    FractionalSubproblem,
    InfeasibleError,
    SolverOptions,
    alternate,
    assemble_precoders,
    dinkelbach,
    find_feasible_point,
    initial_point,
    mapping_diagnostics,
    multistart,
    optimal_alpha,
    optimize_relay_spectrum,
    options_from_mapping,
    random_point,
    solve_inner,
)

OPTS = SolverOptions()
FAST = SolverOptions(alt_tol=1e-4, dinkelbach_tol=1e-4, inner_tol=1e-5)


def unit_spectra(n=2):
    eye = np.eye(n, dtype=complex)
    return Spectra(np.ones(n), np.ones(n), eye, eye, eye)


# --- options -----------------------------------------------------------------


def test_options_validation():
    with pytest.raises(ValueError):
        SolverOptions(dinkelbach_tol=0.0)
    with pytest.raises(ValueError):
        SolverOptions(barrier_shrink=1.0)


def test_options_from_mapping():
    opts = options_from_mapping({"solver.alt_tol": "1e-3",
                                 "solver.max_outer_iters": "7",
                                 "rt_min": "2"})
    assert opts.alt_tol == 1e-3 and opts.max_outer_iters == 7
    with pytest.raises(ValueError):
        options_from_mapping({"solver.bogus": "1"})


# --- closed-form splitting factor -------------------------------------------


def test_optimal_alpha_hand_value():
    cfg = NetworkConfig(p1_ct=0.1, p1_cr=0.1)
    alpha = optimal_alpha(np.array([0.5, 0.5]), np.ones(2), np.array([4.0, 4.0]),
                          unit_spectra(), cfg)
    # collected power: 2 modes x 4 x (1 + 0.5 + 0.2) plus receive noise 0.2
    assert alpha == pytest.approx(1.0 - 1.2 / 13.8, abs=1e-12)


def test_optimal_alpha_eh_equality():
    cfg = NetworkConfig()
    sp = channel_spectra(generate_channels(cfg, 2))
    p, q, r = np.array([0.4, 0.2]), np.array([1.0, 0.5]), np.array([2.0, 1.0])
    alpha = optimal_alpha(p, q, r, sp, cfg)
    from swiptrelay.objective import harvested_power
    pt = SpectrumPoint(alpha, p, q, r)
    need = float(np.sum(p)) + cfg.p1_cr + cfg.p1_ct
    assert harvested_power(pt, sp, cfg) == pytest.approx(need, abs=1e-9)


def test_optimal_alpha_clamped_when_nothing_to_recharge():
    cfg = NetworkConfig(p1_ct=0.0, p1_cr=0.0)
    alpha = optimal_alpha(np.zeros(2), np.ones(2), np.ones(2), unit_spectra(), cfg)
    assert alpha == pytest.approx(1.0 - ALPHA_MIN)


def test_optimal_alpha_infeasible_signal():
    cfg = NetworkConfig()  # needs 8 + 1 W but almost nothing arrives
    with pytest.raises(EnergyHarvestInfeasible):
        optimal_alpha(np.full(2, 4.0), np.ones(2), np.full(2, 1e-6),
                      unit_spectra(), cfg)


# --- Dinkelbach on analytic fractional programs ------------------------------


def _box_cons(lo, hi):
    lo = np.asarray(lo, float)
    hi = np.asarray(hi, float)
    n = lo.size
    eye = np.eye(n)

    def cons(x, derivs=True):
        c = np.concatenate([x - lo, hi - x])
        if not derivs:
            return c
        J = np.vstack([eye, -eye])
        return c, J, np.zeros((2 * n, n))

    return cons


def test_dinkelbach_scalar_fractional_program():
    # max (2x - x^2) / (1 + x) on [0, 1]; optimum at x = sqrt(3) - 1
    def f(x, derivs=True):
        v = 2.0 * x[0] - x[0] ** 2
        if not derivs:
            return v
        return v, np.array([2.0 - 2.0 * x[0]]), np.array([-2.0])

    def g(x, derivs=True):
        v = 1.0 + x[0]
        if not derivs:
            return v
        return v, np.array([1.0]), np.array([0.0])

    sub = FractionalSubproblem(f=f, g=g, cons=_box_cons([0.0], [1.0]),
                               scales=np.ones(2), x0=np.array([0.5]))
    res = dinkelbach(sub, OPTS)
    assert res.converged
    assert res.x[0] == pytest.approx(math.sqrt(3.0) - 1.0, abs=1e-5)
    assert res.mu == pytest.approx(4.0 - 2.0 * math.sqrt(3.0), abs=1e-5)


def test_dinkelbach_unit_denominator_recovers_max():
    # g == 1: the first parametric solve already maximizes f
    def f(x, derivs=True):
        v = -(x[0] - 0.3) ** 2 + 2.0
        if not derivs:
            return v
        return v, np.array([-2.0 * (x[0] - 0.3)]), np.array([-2.0])

    def g(x, derivs=True):
        if not derivs:
            return 1.0
        return 1.0, np.zeros(1), np.zeros(1)

    sub = FractionalSubproblem(f=f, g=g, cons=_box_cons([0.0], [1.0]),
                               scales=np.ones(2), x0=np.array([0.6]))
    res = dinkelbach(sub, OPTS)
    assert res.mu == pytest.approx(2.0, abs=1e-6)
    assert res.x[0] == pytest.approx(0.3, abs=1e-5)


def test_dinkelbach_mu_sequence_increasing_and_f_decreasing():
    rng = np.random.default_rng(0)
    for _ in range(25):
        n = int(rng.integers(1, 4))
        center = rng.uniform(0.0, 1.0, n)
        curv = rng.uniform(0.5, 3.0, n)
        off = float(rng.uniform(1.0, 3.0))
        slope = rng.uniform(0.0, 1.0, n)

        def f(x, derivs=True, center=center, curv=curv, off=off):
            v = off - float(curv @ (x - center) ** 2)
            if not derivs:
                return v
            return v, -2.0 * curv * (x - center), -2.0 * curv

        def g(x, derivs=True, slope=slope):
            v = 1.0 + float(slope @ x)
            if not derivs:
                return v
            return v, slope.copy(), np.zeros(x.size)

        sub = FractionalSubproblem(f=f, g=g, cons=_box_cons(np.zeros(n), np.ones(n)),
                                   scales=np.ones(2 * n), x0=np.full(n, 0.5))
        res = dinkelbach(sub, OPTS)
        assert res.converged
        mus = res.mu_sequence
        assert all(b > a - 1e-12 for a, b in zip(mus, mus[1:]))
        fs = res.f_sequence
        assert all(b < a + 1e-9 for a, b in zip(fs, fs[1:]))


def test_inner_solver_matches_water_filling():
    coefs = np.array([3.0, 0.8])
    budget = 1.5

    def f(x, derivs=True):
        d = 1.0 + coefs * x
        if not derivs:
            return float(np.sum(np.log(d)))
        return float(np.sum(np.log(d))), coefs / d, -((coefs / d) ** 2)

    def g(x, derivs=True):
        if not derivs:
            return 1.0
        return 1.0, np.zeros(2), np.zeros(2)

    def cons(x, derivs=True):
        c = np.concatenate([x, [budget - float(np.sum(x))]])
        if not derivs:
            return c
        J = np.vstack([np.eye(2), -np.ones((1, 2))])
        return c, J, np.zeros((3, 2))

    sub = FractionalSubproblem(f=f, g=g, cons=cons, scales=np.ones(3),
                               x0=np.full(2, budget / 4))
    x, _ = solve_inner(0.0, sub, OPTS)
    assert np.allclose(x, water_filling(coefs, budget), atol=1e-6)


def test_degenerate_single_point_feasible_set():
    # only x = 0 is feasible; the solver must return it without iterating
    def f(x, derivs=True):
        v = float(np.sum(x))
        if not derivs:
            return v
        return v, np.ones(1), np.zeros(1)

    def g(x, derivs=True):
        if not derivs:
            return 1.0
        return 1.0, np.zeros(1), np.zeros(1)

    sub = FractionalSubproblem(f=f, g=g, cons=_box_cons([0.0], [0.0]),
                               scales=np.ones(2), x0=np.zeros(1))
    res = dinkelbach(sub, OPTS)
    assert res.x[0] == pytest.approx(0.0, abs=1e-12)
    assert res.mu == pytest.approx(0.0, abs=1e-12)


def test_dinkelbach_infeasible_raises():
    def f(x, derivs=True):
        if not derivs:
            return 0.0
        return 0.0, np.zeros(1), np.zeros(1)

    sub = FractionalSubproblem(f=f, g=f, cons=_box_cons([1.0], [0.0]),
                               scales=np.ones(2), x0=np.array([0.5]))
    with pytest.raises(InfeasibleError):
        dinkelbach(sub, OPTS)


# --- precoder assembly -------------------------------------------------------


def test_assemble_precoders_identity_case():
    cfg = NetworkConfig()
    ch = generate_channels(cfg, 0)
    pt = SpectrumPoint(0.5, np.ones(2), np.ones(2), np.ones(2))
    prec = assemble_precoders(pt, ch)
    assert np.allclose(prec.q1, np.eye(2), atol=1e-12)
    assert np.allclose(prec.qr, np.eye(2), atol=1e-12)
    assert prec.exact


def test_assemble_precoders_trace_rank():
    cfg = NetworkConfig()
    ch = generate_channels(cfg, 1)
    pt = SpectrumPoint(0.5, np.array([2.0, 0.0]), np.ones(2), np.ones(2))
    prec = assemble_precoders(pt, ch)
    assert float(np.trace(prec.q1).real) == pytest.approx(2.0)
    assert np.linalg.matrix_rank(prec.q1, tol=1e-9) == 1
    # f1 is a Hermitian square root of q1
    assert np.allclose(prec.f1 @ prec.f1.conj().T, prec.q1, atol=1e-10)


def test_assemble_precoders_iid_flagged_approximate():
    from swiptrelay.model import ChannelMode
    cfg = NetworkConfig()
    ch = generate_channels(cfg, 1, ChannelMode.IID_GAUSSIAN)
    pt = SpectrumPoint(0.5, np.ones(2), np.ones(2), np.ones(2))
    assert not assemble_precoders(pt, ch).exact


# --- block steps and the alternation ----------------------------------------


def test_relay_step_zero_rate_tie_break():
    cfg = NetworkConfig(rt_min=0.0, p1_ct=0.0, p1_cr=0.0)
    ch = generate_channels(cfg, 0)
    state = SpectrumPoint(0.5, np.zeros(2), np.zeros(2), np.ones(2))
    r, res = optimize_relay_spectrum(state, ch, cfg, OPTS)
    assert np.array_equal(r, np.zeros(2))
    assert res is None


def test_alternate_monotone_feasible_converged():
    cfg = NetworkConfig()
    for seed in (0, 1, 2):
        sol = alternate(generate_channels(cfg, seed), cfg, OPTS)
        assert sol.converged and sol.report.feasible
        ees = sol.trace.ee_values()
        assert np.all(np.diff(ees) >= -1e-9)
        assert sol.ee == pytest.approx(ees[-1])


def test_alternate_fixed_point_terminates_immediately():
    cfg = NetworkConfig()
    ch = generate_channels(cfg, 4)
    sol = alternate(ch, cfg, OPTS)
    again = alternate(ch, cfg, OPTS, sol.point)
    assert again.ee == pytest.approx(sol.ee, rel=1e-6)
    assert len(again.trace.rows) <= 2


def test_alternate_infeasible_names_constraint():
    cfg = NetworkConfig(rt_min=100.0)
    with pytest.raises(InfeasibleError, match="rate_tr"):
        alternate(generate_channels(cfg, 0), cfg, OPTS)


def test_alternate_solution_satisfies_constraints():
    cfg = NetworkConfig()
    sol = alternate(generate_channels(cfg, 6), cfg, OPTS)
    rep = sol.report
    for slack in (rep.power_tr1, rep.power_tr2, rep.power_relay,
                  rep.rate_tr1, rep.rate_tr2, rep.eh_balance):
        assert slack >= -1e-8


def test_alternate_no_eh_pins_alpha_high():
    cfg = NetworkConfig()
    sol = alternate(generate_channels(cfg, 3), cfg, OPTS, include_eh=False)
    assert sol.point.alpha == pytest.approx(1.0 - ALPHA_MIN)
    assert sol.report.feasible


def test_alternate_fixed_relay_spectrum_respected():
    cfg = NetworkConfig()
    fixed = np.full(2, cfg.pr_max / 2)
    sol = alternate(generate_channels(cfg, 3), cfg, OPTS,
                    relay_spectrum_fixed=fixed)
    assert np.array_equal(sol.point.lambda_qr, fixed)


def test_multistart_k1_equals_alternate():
    cfg = NetworkConfig()
    ch = generate_channels(cfg, 5)
    assert multistart(ch, cfg, FAST, k=1).ee == pytest.approx(
        alternate(ch, cfg, FAST).ee)


def test_multistart_best_nondecreasing_in_k():
    cfg = NetworkConfig()
    ch = generate_channels(cfg, 5)
    e1 = multistart(ch, cfg, FAST, k=1).ee
    e3 = multistart(ch, cfg, FAST, k=3).ee
    e5 = multistart(ch, cfg, FAST, k=5).ee
    assert e3 >= e1 - 1e-12
    assert e5 >= e3 - 1e-12


def test_find_feasible_point_easy_case():
    cfg = NetworkConfig()
    pt = find_feasible_point(generate_channels(cfg, 0), cfg, OPTS)
    assert pt is not None
    assert check_feasibility(pt, channel_spectra(generate_channels(cfg, 0)),
                             cfg).feasible


def test_find_feasible_point_none_when_impossible():
    cfg = NetworkConfig(rt_min=100.0)
    assert find_feasible_point(generate_channels(cfg, 0), cfg, OPTS) is None


def test_initial_and_random_points_within_caps():
    cfg = NetworkConfig()
    sp = channel_spectra(generate_channels(cfg, 8))
    pts = [initial_point(sp, cfg)]
    rng = np.random.default_rng(0)
    pts += [random_point(sp, cfg, rng) for _ in range(5)]
    for pt in pts:
        assert 0.0 < pt.alpha < 1.0
        assert float(np.sum(pt.lambda_q1)) <= cfg.p1_max + 1e-9
        assert float(np.sum(pt.lambda_q2)) <= cfg.p2_max + 1e-9


def test_solver_determinism():
    cfg = NetworkConfig()
    ch = generate_channels(cfg, 9)
    a = alternate(ch, cfg, OPTS)
    b = alternate(ch, cfg, OPTS)
    assert a.ee == b.ee
    assert np.array_equal(a.point.lambda_qr, b.point.lambda_qr)


def test_mapping_diagnostics_basic_properties():
    cfg = NetworkConfig()
    ch = generate_channels(cfg, 0)
    rep = mapping_diagnostics(ch, cfg, FAST, alphas=[0.3, 0.5, 0.7], beta=1.0)
    assert rep.nonneg_violations == 0
    assert rep.scalability_violations == 0  # beta = 1 is an exact identity
