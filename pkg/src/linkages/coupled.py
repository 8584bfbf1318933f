"""Coupling of the renewal dynamics with the delay equation.

For each eps the age density rho_eps feeds the time dependent delay solver;
the macroscopic limit X_0 solves mu_{1,0}(t) X_0' = f(t) with mu_{1,0} the
first moment of the closed-form rho_0.  The sweep records how fast X_eps
and rho_eps approach their limits.
"""

from dataclasses import dataclass, field
import time

import numpy as np

from .direct import DelayProblem, solve_x_eps_timedep
from .errors import DegenerateFit, DegenerateMoment
from .grids import GridFunction
from .renewal import (RatePair, rho0_first_moment,
                      solve_rho0, solve_rho_eps, weighted_error)


def solve_x0_timedep(mu10, f, x_init, T, h) -> GridFunction:
    """Classical RK4 for X_0' = f(t) / mu_{1,0}(t), X_0(0) = x_init."""
    n = int(round(T / h))

    def rhs(t):
        m = float(mu10(t))
        if m <= 0.0:
            raise DegenerateMoment(f"mu_10({t}) = {m}")
        return float(f(t)) / m

    X = np.empty(n + 1)
    X[0] = float(x_init)
    for m in range(n):
        t = m * h
        k1 = rhs(t)
        k23 = rhs(t + h / 2.0)
        k4 = rhs(t + h)
        X[m + 1] = X[m] + h / 6.0 * (k1 + 4.0 * k23 + k4)
    return GridFunction(0.0, h, X)


@dataclass
class CoupledScenario:
    rates: RatePair
    rho_init: object          # callable a -> density, or profile array
    source: object            # callable t -> value
    past: object              # callable t -> value for t <= 0
    T: float
    a_step: float
    A_max: float


@dataclass
class ConvergenceReport:
    eps_values: list
    errors: dict              # name -> list aligned with eps_values
    fitted_slopes: dict = field(default_factory=dict)
    runtimes: list = field(default_factory=list)
    notes: list = field(default_factory=list)

    def fit(self):
        from .harness import fit_slope
        for name, errs in self.errors.items():
            try:
                slope, intercept, resid = fit_slope(self.eps_values, errs)
                self.fitted_slopes[name] = slope
            except DegenerateFit as exc:
                self.fitted_slopes[name] = float("nan")
                self.notes.append(f"{name}: {exc}")
        return self


def run_coupled_single(sc: CoupledScenario, eps):
    """One sweep member: returns (x_eps, x_0, rho field, error dict)."""
    fld = solve_rho_eps(sc.rates, sc.rho_init, eps, sc.a_step, sc.A_max, sc.T)
    prob = DelayProblem(kernel=None, source=sc.source, past=sc.past,
                        eps=eps, T=sc.T, h=fld.t_step)
    x_eps = solve_x_eps_timedep(prob, fld)
    past0 = float(np.asarray(sc.past(0.0)))
    x0 = solve_x0_timedep(lambda t: rho0_first_moment(sc.rates, t),
                          sc.source, past0, sc.T, fld.t_step)
    rho0_vals = np.stack(
        [solve_rho0(sc.rates, t, fld.ages()) for t in fld.times()], axis=1)
    sup_x = float(np.max(np.abs(x_eps.values - x0.values)))
    werr = weighted_error(fld, rho0_vals, 1, rates=sc.rates)
    rho_l1 = float(np.trapezoid(werr, dx=fld.t_step))
    return x_eps, x0, fld, {"x_sup": sup_x, "rho_l1t": rho_l1,
                            "rho_sup": float(np.max(werr))}


def run_coupled_sweep(sc: CoupledScenario, eps_values, threads=1):
    """Limit experiment: errors of X_eps and rho_eps versus eps."""
    eps_values = sorted((float(e) for e in eps_values), reverse=True)
    results = {}

    def member(eps):
        t0 = time.perf_counter()
        _, _, _, errs = run_coupled_single(sc, eps)
        return errs, time.perf_counter() - t0

    if threads > 1:
        from concurrent.futures import ThreadPoolExecutor
        with ThreadPoolExecutor(max_workers=threads) as pool:
            for eps, res in zip(eps_values, pool.map(member, eps_values)):
                results[eps] = res
    else:
        for eps in eps_values:
            results[eps] = member(eps)

    report = ConvergenceReport(
        eps_values=list(eps_values),
        errors={name: [results[e][0][name] for e in eps_values]
                for name in ("x_sup", "rho_l1t", "rho_sup")},
        runtimes=[results[e][1] for e in eps_values])
    return report.fit()
