import numpy as np
import pytest

from linkages.direct import (DelayProblem, balance_residual, past_integral,
                             solve_x_eps, solve_x_eps_timedep)
from linkages.errors import GridNotAligned, StepTooCoarse
from linkages.kernels import KernelDensity
from linkages.polynomials import PolyFunction
from linkages.renewal import RatePair, solve_rho_eps


EXP1 = KernelDensity.exponential(1.0)
F = PolyFunction.from_coeffs((1.0, 0.5))
PAST = PolyFunction.from_coeffs((0.0, 0.25))


def exact_exponential_solution(eps, t):
    # for the unit exponential kernel with f = 1 + t/2, past = t/4 the
    # solution is the quadratic 0.75 eps + (1 + eps/2) t + t^2/4
    return 0.75 * eps + (1.0 + eps / 2.0) * t + t ** 2 / 4.0


@pytest.mark.parametrize("eps", [0.25, 0.1, 0.05])
def test_exact_on_quadratic_benchmark(eps):
    p = DelayProblem(EXP1, F, PAST, eps, 1.0, eps / 8.0)
    x = solve_x_eps(p)
    want = exact_exponential_solution(eps, x.times())
    assert np.max(np.abs(x.values - want)) < 1e-12


def test_step_guard():
    with pytest.raises(StepTooCoarse):
        DelayProblem(EXP1, F, PAST, 0.1, 1.0, 0.05)


def test_past_integral_polynomial_vs_quadrature():
    eps = 0.1
    t = np.array([0.0, 0.05, 0.2, 1.0])
    a = past_integral(EXP1, PAST, eps, t)
    b = past_integral(EXP1, lambda s: 0.25 * s, eps, t)
    assert np.max(np.abs(a - b)) < 1e-10


def test_balance_residual_small():
    eps = 0.1
    p = DelayProblem(EXP1, F, PAST, eps, 1.0, eps / 8.0)
    x = solve_x_eps(p)
    # independent PL defect of the scheme's solution, scaled by eps
    assert balance_residual(p, x) < 1e-2


def test_gamma_kernel_self_convergence():
    d = KernelDensity.gamma(2.0, 3.0)
    f = PolyFunction.from_coeffs((1.0, 0.5, 0.0, 1.0))
    eps = 0.1
    xa = solve_x_eps(DelayProblem(d, f, PAST, eps, 1.0, eps / 8.0))
    xb = solve_x_eps(DelayProblem(d, f, PAST, eps, 1.0, eps / 16.0))
    diff = np.max(np.abs(xa.values - xb.values[::2]))
    xc = solve_x_eps(DelayProblem(d, f, PAST, eps, 1.0, eps / 32.0))
    diff2 = np.max(np.abs(xb.values - xc.values[::2]))
    assert diff2 < diff / 4.0  # at least second order in practice


def test_tabulated_path_matches_exponential():
    # sampled exponential profile, trapezoid path vs an analytic run at the
    # same age resolution differ only through the sampled quadrature
    eps, T, A = 0.1, 0.5, 40.0
    errs = []
    for a_step in (0.05, 0.025):
        h = eps * a_step
        a = a_step * np.arange(int(round(A / a_step)) + 1)
        d = KernelDensity.tabulated(np.exp(-a).tolist(), a_step,
                                    tail_rule=("exponential", 1.0))
        x = solve_x_eps(DelayProblem(d, F, PAST, eps, T, h))
        want = exact_exponential_solution(eps, x.times())
        errs.append(np.max(np.abs(x.values - want)))
    assert errs[0] < 5e-3
    assert errs[1] < 0.6 * errs[0]  # refining the table reduces the error


def test_timedep_requires_alignment():
    r = RatePair.constant(1.0, 1.0)
    fld = solve_rho_eps(r, lambda a: 0.5 * np.exp(-np.asarray(a)), 0.1,
                        0.05, 30.0, 0.5)
    p = DelayProblem(None, F, PAST, 0.2, 0.5, fld.t_step)
    with pytest.raises(GridNotAligned):
        solve_x_eps_timedep(p, fld)


def test_timedep_stationary_field_matches_tabulated():
    r = RatePair.power_tail(6.0, 1.0)
    a_step = 0.05
    A = 220.0
    ages = a_step * np.arange(int(round(A / a_step)) + 1)
    S = r.survival(ages, 0.0)
    star = S / (1.0 + np.trapezoid(S, dx=a_step))
    eps, T = 0.1, 0.5
    fld = solve_rho_eps(r, star, eps, a_step, A, T, tail_tol=1e-6)
    f = PolyFunction.from_coeffs((1.0,))
    zero = PolyFunction.zero()
    p = DelayProblem(None, f, zero, eps, T, fld.t_step)
    x_a = solve_x_eps_timedep(p, fld)
    d = KernelDensity.tabulated(star.tolist(), a_step)
    x_b = solve_x_eps(DelayProblem(d, f, zero, eps, T, fld.t_step))
    assert np.max(np.abs(x_a.values - x_b.values)) < 1e-10
