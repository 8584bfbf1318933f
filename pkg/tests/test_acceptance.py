"""End-to-end acceptance battery.

Each test pins one contract of the package at its stated tolerance:
rate reproduction for the matched expansion, closed-form corrector
oracles, matching of the layer sums, combinatorial identities, renewal
stationarity, initial-layer decay, second-order smallness of the
age-density expansion, the coupled limit, and the contraction bound.
"""

import time
from pathlib import Path

import numpy as np
import pytest

from linkages.coupled import solve_x0_timedep
from linkages.direct import DelayProblem, solve_x_eps, solve_x_eps_timedep
from linkages.expansion import (ExpansionSet, reshuffle2_lhs, reshuffle2_rhs,
                                reshuffle_lhs, reshuffle_rhs)
from linkages.harness import fit_slope, load_config, rate_study
from linkages.kernels import KernelDensity
from linkages.polynomials import PolyFunction
from linkages.renewal import (RatePair, lyapunov, rho0_first_moment,
                              solve_initial_layer, solve_rho0, solve_rho1,
                              solve_rho_eps)
from linkages.volterra import CorrectorTable


CONFIGS = Path(__file__).resolve().parents[1] / "configs"

EXP1 = KernelDensity.exponential(1.0)
F_LIN = PolyFunction.from_coeffs((1.0, 0.5))
PAST_LIN = PolyFunction.from_coeffs((0.0, 0.25))

RATE_SWEEP_CFG = """
[kernel]
family = exponential
rate = 1.0

[source]
coeffs = 1.0 0.5

[past]
coeffs = 0.0 0.25

[expansion]
order = 3

[sweep]
eps = 0.0625 0.03125 0.015625 0.0078125 0.00390625 0.001953125
h_over_eps = 0.125
T = 1.0
"""


@pytest.fixture(scope="module")
def exp_table():
    # shared across the rate and oracle tests; order 4 covers k, l <= 4
    return CorrectorTable.build(EXP1, 4, 1e-3, 40.0)


@pytest.fixture(scope="module")
def heavy_scenario():
    """Power-tail off-rate, sinusoidal on-rate, heavy-tailed initial data."""
    r = RatePair.power_tail(6.0, (1.0, 0.25))
    rho_init = lambda a: 3.5 * (1.0 + np.asarray(a, dtype=float)) ** (-8.0)
    return r, rho_init


# 1. sup-norm error of the order-N expansion decays like eps^N ------------

def test_expansion_rate_sweep(tmp_path, exp_table):
    t0 = time.perf_counter()
    p = tmp_path / "sweep.ini"
    p.write_text(RATE_SWEEP_CFG)
    cfg = load_config(str(p))
    for N in (1, 2, 3):
        study = rate_study(cfg, order=N, table=exp_table)
        assert study.passed
        if study.status == "ok":
            assert study.slope >= N - 0.25
        else:
            # the expansion terminates for this kernel: errors sit at the
            # machine floor, which is stronger than any finite rate
            assert study.status == "exact"
            assert max(study.errors) <= 1e-10
    assert time.perf_counter() - t0 < 60.0


def test_expansion_rate_order_one_slope(tmp_path, exp_table):
    p = tmp_path / "sweep.ini"
    p.write_text(RATE_SWEEP_CFG)
    study = rate_study(load_config(str(p)), order=1, table=exp_table)
    assert study.status == "ok"
    assert study.slope == pytest.approx(1.0, abs=0.05)


# 2. corrector oracles -----------------------------------------------------

def test_corrector_oracles_exponential(exp_table):
    h = exp_table.h
    tol = 5.0 * h * h
    tab = exp_table
    t = tab.x[(0, 0)].times()
    assert np.max(np.abs(tab.x[(0, 0)].values - 1.0)) < tol
    assert np.max(np.abs(tab.x[(1, 0)].values - (1.0 - np.exp(-t)))) < tol
    assert np.max(np.abs(tab.w[0].values - 1.0)) < tol
    assert np.max(np.abs(tab.w[1].values + 1.0)) < tol
    mu0 = EXP1.moment(0)
    for k in range(5):
        assert abs(tab.x[(0, k)].values[0] - EXP1.moment(k) / mu0) < tol
    for ell in range(5):
        want = (-1.0) ** ell * EXP1.moment(ell) / mu0
        assert abs(tab.w[ell].values[0] - want) < tol
        assert tab.w[ell].left_limit == 0.0


def test_corrector_long_time_values_poly_tail():
    # the slowest correctors (j + k = 4) settle like t^{-3}, so the table
    # needs a long horizon before the stability guard clears 1e-3
    d = KernelDensity.poly_tail(8.0)
    tab = CorrectorTable.build(d, 4, 4e-3, 200.0)
    # t_max stability guard: the stored tails have settled
    assert tab.limit_tolerance < 1e-3
    mu1 = d.moment(1)
    for (j, k), g in tab.x.items():
        want = d.moment(j + k + 1) / ((j + 1) * mu1)
        assert abs(g.values[-1] - want) < 1e-3
    for ell, g in tab.w.items():
        want = (-1.0) ** ell * d.moment(ell + 1) / ((ell + 1) * mu1)
        assert abs(g.values[-1] - want) < 1e-3


# 3. matching: layers vanish at t >> eps and the initial value converges ---

def test_matching_shipped_order_three():
    cfg = load_config(str(CONFIGS / "matching_n3.ini"))
    ex = ExpansionSet.build(cfg.kernel, cfg.source, cfg.past, cfg.order,
                            cfg.micro_step, cfg.micro_t_max)
    errs = []
    for eps in sorted(cfg.eps_values, reverse=True):
        Y, Z, W = ex.layer_terms(eps, np.array([20.0 * eps]))
        assert abs(Y[0] + Z[0] + W[0]) < 10.0 * ex.table.limit_tolerance
        x = solve_x_eps(DelayProblem(cfg.kernel, cfg.source, cfg.past,
                                     eps, cfg.T, eps * cfg.h_over_eps))
        errs.append(abs(x.values[0] - ex.initial_value(eps)))
    slope, _, _ = fit_slope(sorted(cfg.eps_values, reverse=True), errs)
    assert slope >= cfg.order - 0.25


# 4. index reshuffle identities --------------------------------------------

def test_reshuffle_identities_seeded():
    rng = np.random.default_rng(20240817)
    for N in range(2, 9):
        size = 2 * N + 2
        for _ in range(100):
            a = rng.integers(-9, 10, size=(size, size, size)).astype(float)
            assert reshuffle_lhs(a, N) == reshuffle_rhs(a, N)
            b = rng.integers(-9, 10, size=(size, size)).astype(float)
            assert reshuffle2_lhs(b, N) == reshuffle2_rhs(b, N)
    ones = np.ones((6, 6, 6))
    assert reshuffle_lhs(ones, 2) == 5.0


# 5. renewal stationarity oracle -------------------------------------------

def test_renewal_stationarity_second_order():
    r = RatePair.constant(1.0, 1.0)
    rho_init = lambda a: 0.5 * np.exp(-np.asarray(a, dtype=float))
    sups = []
    for a_step in (0.02, 0.01):
        fld = solve_rho_eps(r, rho_init, 0.1, a_step, 30.0, 1.0)
        ages = fld.ages()
        target = 0.5 * np.exp(-ages)
        werr = np.array([
            np.trapezoid((1.0 + ages) * np.abs(fld.values[:, n] - target),
                         dx=a_step)
            for n in range(fld.n_t + 1)])
        sups.append(float(np.max(werr)))
        assert sups[-1] < 10.0 * a_step ** 2
    ratio = sups[0] / sups[1]
    assert 3.0 < ratio < 5.0


# 6. initial-layer decay ---------------------------------------------------

def test_initial_layer_decay(heavy_scenario):
    r, rho_init = heavy_scenario
    a_step = 0.05
    A = a_step * round(r.a_max_for_tail(1e-10, 1) / a_step + 0.5)
    lay = solve_initial_layer(r, rho_init, a_step, A, 50.0, None)
    n1 = lay.field.time_index(1.0)
    trace = np.abs(lay.trace.values)
    assert trace[-1] < trace[n1] / 10.0
    ages = lay.field.ages()
    w = lambda col: np.trapezoid((1.0 + ages) * np.abs(col), dx=a_step)
    assert w(lay.field.values[:, -1]) < w(lay.field.values[:, n1]) / 10.0


# 7. second-order smallness of the age-density expansion -------------------

def test_age_density_expansion_smallness(heavy_scenario):
    r, rho_init = heavy_scenario
    a_step, T = 0.02, 1.0
    A = a_step * round(r.a_max_for_tail(1e-10, 1) / a_step + 0.5)
    lay = solve_initial_layer(r, rho_init, a_step, A, T / 0.025 + 2.0, None)
    na = int(round(A / a_step))
    ages = a_step * np.arange(na + 1)
    rho0_T = solve_rho0(r, T, ages)
    rho1_T = solve_rho1(r, T, ages)
    S = r.survival(ages, 0.0)
    I_d = r.survival_integral(0.0)
    h_vals, l1_vals = [], []
    for eps in (0.1, 0.05, 0.025):
        fld = solve_rho_eps(r, rho_init, eps, a_step, A, T)
        layer_T = lay.field.values[:, int(round(T / (eps * a_step)))]
        u = fld.values[:, -1] - rho0_T - eps * rho1_T - layer_T
        h_vals.append(lyapunov(u, a_step))
        times = fld.times()
        b = r.beta(times)
        rho0_all = np.outer(S, b / (1.0 + b * I_d))
        diff = np.abs(fld.values - rho0_all)
        per_t = np.trapezoid((1.0 + ages)[:, None] * diff, dx=a_step, axis=0)
        l1_vals.append(float(np.trapezoid(per_t, dx=fld.t_step)))
    def inversions(v):
        return sum(1 for i in range(len(v) - 1) if v[i + 1] > v[i])
    assert inversions(h_vals) <= 1
    assert inversions(l1_vals) <= 1
    assert l1_vals[-1] < l1_vals[0]


# 8. coupled limit ----------------------------------------------------------

def test_coupled_limit_monotone(heavy_scenario):
    r, rho_init = heavy_scenario
    a_step, T = 0.05, 1.0
    A = a_step * round(r.a_max_for_tail(1e-10, 1) / a_step + 0.5)
    one = lambda t: np.ones_like(np.asarray(t, dtype=float))
    zero = lambda t: np.zeros_like(np.asarray(t, dtype=float))
    errs = []
    for eps in (0.1, 0.05, 0.025):
        fld = solve_rho_eps(r, rho_init, eps, a_step, A, T)
        p = DelayProblem(None, one, zero, eps, T, fld.t_step)
        x_eps = solve_x_eps_timedep(p, fld)
        x0 = solve_x0_timedep(lambda t: rho0_first_moment(r, t), one, 0.0,
                              T, fld.t_step)
        errs.append(float(np.max(np.abs(x_eps.values - x0.values))))
    assert all(errs[i] > errs[i + 1] for i in range(len(errs) - 1))


def test_coupled_degenerate_stationary_case():
    r = RatePair.power_tail(6.0, 1.0)
    a_step = 0.05
    A = a_step * round(r.a_max_for_tail(1e-10, 1) / a_step + 0.5)
    ages = a_step * np.arange(int(round(A / a_step)) + 1)
    S = r.survival(ages, 0.0)
    star = S / (1.0 + np.trapezoid(S, dx=a_step))
    eps, T = 0.1, 1.0
    one = lambda t: np.ones_like(np.asarray(t, dtype=float))
    zero = lambda t: np.zeros_like(np.asarray(t, dtype=float))
    fld = solve_rho_eps(r, star, eps, a_step, A, T)
    assert np.max(np.abs(fld.values - star[:, None])) < 1e-12
    p = DelayProblem(None, one, zero, eps, T, fld.t_step)
    x_a = solve_x_eps_timedep(p, fld)
    d = KernelDensity.tabulated(star.tolist(), a_step)
    x_b = solve_x_eps(DelayProblem(d, one, zero, eps, T, fld.t_step))
    assert np.max(np.abs(x_a.values - x_b.values)) < 1e-8


# 9. contraction bound -------------------------------------------------------

def test_contraction_grid_all_families():
    a = 0.01 * np.arange(4001)
    families = [EXP1,
                KernelDensity.gamma(2.0, 3.0),
                KernelDensity.poly_tail(6.0),
                KernelDensity.tabulated(np.exp(-a).tolist(), 0.01,
                                        tail_rule=("exponential", 1.0))]
    # T/eps stays at or below 10 so the truncated mass is representably
    # below one for every family (the gamma tail underflows past ~30)
    for d in families:
        for eps in (0.1, 0.2, 0.4, 0.8, 1.6):
            for T in (0.2, 0.4, 0.6, 0.8, 1.0):
                val = d.contraction_norm(eps, T)
                assert 0.0 < val < 1.0


def test_contraction_closed_form_value():
    got = EXP1.contraction_norm(0.1, 1.0)
    assert abs(got - (1.0 - np.exp(-10.0))) < 1e-12
