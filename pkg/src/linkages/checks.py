"""Seeded self-check battery behind the `check` subcommand.

Each check is fast and deterministic for a given seed; the battery is a
smoke test of the core invariants, not a replacement for the test suite.
"""

import numpy as np

from .expansion import (reshuffle2_lhs, reshuffle2_rhs,
                        reshuffle_lhs, reshuffle_rhs)
from .kernels import KernelDensity
from .renewal import RatePair, mass_balance_residual, solve_rho_eps
from .volterra import CorrectorTable


def check_moments(rng):
    """Closed-form moments agree with adaptive quadrature."""
    kernels = [KernelDensity.exponential(1.0 + rng.random()),
               KernelDensity.gamma(1.0 + 2.0 * rng.random(), 1.5),
               KernelDensity.poly_tail(6.0 + rng.random())]
    for d in kernels:
        for k in range(4):
            a = d.moment(k)
            b = d.moment_by_quadrature(k)
            if abs(a - b) > 1e-8 * max(1.0, abs(a)):
                return f"{d.family} moment {k}: {a} vs {b}"
    return None


def check_reshuffles(rng):
    """Triple and double index reshuffles hold for random arrays."""
    for N in range(2, 6):
        a3 = rng.standard_normal((N + 1, N + 1, N + 1))
        if abs(reshuffle_lhs(a3, N) - reshuffle_rhs(a3, N)) > 1e-10:
            return f"triple reshuffle failed at N={N}"
        a2 = rng.standard_normal((N + 1, N + 1))
        if abs(reshuffle2_lhs(a2, N) - reshuffle2_rhs(a2, N)) > 1e-10:
            return f"double reshuffle failed at N={N}"
    return None


def check_corrector_limits(rng):
    """Table correctors settle onto their moment-ratio limits."""
    d = KernelDensity.exponential(1.0)
    tab = CorrectorTable.build(d, 1, 1e-2, 25.0)
    for (j, k), g in tab.x.items():
        if abs(g.values[-1] - tab.x_limits[(j, k)]) > 10 * tab.limit_tolerance:
            return f"x_{j}_{k} end value far from limit"
    for ell, g in tab.w.items():
        if abs(g.values[-1] - tab.w_limits[ell]) > 10 * tab.limit_tolerance:
            return f"w_{ell} end value far from limit"
    if np.max(tab.w[1].values) > 1e-10:
        return "w_1 is not nonpositive"
    return None


def check_contraction(rng):
    """Truncated-mass contraction factor matches the closed form."""
    d = KernelDensity.exponential(1.0)
    got = d.contraction_norm(1.0, 10.0)
    want = 1.0 - np.exp(-10.0)
    if abs(got - want) > 1e-12:
        return f"contraction factor {got} vs {want}"
    return None


def check_renewal_invariants(rng):
    """Age density stays nonnegative with mass at most one."""
    r = RatePair.constant(1.0, 0.8 + 0.2 * rng.random())
    rho_init = lambda a: 0.5 * np.exp(-np.asarray(a, dtype=float))
    fld = solve_rho_eps(r, rho_init, 0.25, 0.05, 30.0, 0.5)
    if np.min(fld.values) < 0.0:
        return "negative density value"
    mass = np.trapezoid(fld.values, dx=fld.a_step, axis=0)
    if np.max(mass) > 1.0 + 1e-9:
        return f"mass exceeds one: {np.max(mass)}"
    resid = mass_balance_residual(fld, r)
    if resid > 50.0 * fld.a_step ** 2:
        return f"mass balance residual too large: {resid}"
    return None


CHECKS = [check_moments, check_reshuffles, check_corrector_limits,
          check_contraction, check_renewal_invariants]


def run_all(seed=1234):
    failures = []
    for fn in CHECKS:
        rng = np.random.default_rng(seed)
        name = fn.__name__
        try:
            msg = fn(rng)
        except Exception as exc:
            msg = f"raised {type(exc).__name__}: {exc}"
        if msg is None:
            print(f"PASS {name}")
        else:
            print(f"FAIL {name}: {msg}")
            failures.append((name, msg))
    return failures
