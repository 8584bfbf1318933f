"""Second-kind Volterra machinery on the fast time scale.

The resolvent r of the normalized kernel k = rho/mu_0 solves

    r(t) - (r * k)(t) = k(t),

and every corrector below is r applied to an analytically known forcing:

    micro corrector x_{j,k}:  mu_0 x - x * rho = xi_{j,k}
    past corrector  w_l:      mu_0 w - w * rho = int_t^inf (t-a)^l rho(a) da

Marching uses exact per-cell kernel moments against a piecewise linear
unknown, so the only discretization error is the PL interpolation of the
unknown itself (second order, with no kernel sampling error).
"""

from dataclasses import dataclass, field
from functools import lru_cache
import math

import numpy as np
from scipy.signal import fftconvolve

from .errors import GridMismatch, ResidualTooLarge, TableRangeExceeded
from .grids import GridFunction
from .kernels import KernelDensity

try:
    from numba import njit
except ImportError:  # pragma: no cover - numba is a declared dependency
    def njit(*a, **k):
        def wrap(f):
            return f
        return wrap(a[0]) if a and callable(a[0]) else wrap


def convolve_values(f, g, h):
    """Product-integration convolution of two sampled functions.

    Both factors are treated as piecewise linear on the uniform grid with
    step h starting at 0; the cell integrals are then exact:

        (f*g)(t_m) = (h/6) * sum_cells (2A + B + C + 2D)

    with A..D the corner products of each cell.  Exact for f, g linear.
    """
    f = np.asarray(f, dtype=float)
    g = np.asarray(g, dtype=float)
    if f.shape != g.shape or f.ndim != 1:
        raise GridMismatch("convolution factors must share one grid")
    n = len(f)
    c = fftconvolve(f, g)  # c[m] = sum_{i+j=m} f_i g_j, length 2n-1
    m = np.arange(n)
    A = c[:n] - f[0] * g
    Cc = np.concatenate([[0.0], c[: n - 1]])
    fpad = np.concatenate([f, [0.0]])
    gpad = np.concatenate([g, [0.0]])
    B = c[1 : n + 1] - fpad[1 : n + 1] * g[0] - f[0] * gpad[1 : n + 1]
    D = c[:n] - f * g[0]
    out = (h / 6.0) * (2.0 * A + B + Cc + 2.0 * D)
    out[0] = 0.0
    return out


def convolve(f: GridFunction, g: GridFunction) -> GridFunction:
    if not f.same_grid(g) or abs(f.t0) > 1e-15:
        raise GridMismatch("convolution requires identical grids starting at 0")
    return GridFunction(0.0, f.h, convolve_values(f.values, g.values, f.h))


@njit(cache=True)
def _march_second_kind(F, G, rhs, sign):
    """March y_n - sign*(y * k)_n = rhs_n with PL y and cell weights F, G.

    Cell j of the convolution contributes F[j]*y[m-j] + G[j]*y[m-j-1],
    where F and G are the exact integrals of the two hat pieces against
    the kernel over cell j.
    """
    n = rhs.shape[0]
    y = np.empty(n)
    y[0] = rhs[0]
    for m in range(1, n):
        s = 0.0
        for j in range(1, m):
            s += F[j] * y[m - j]
        for j in range(m):
            s += G[j] * y[m - j - 1]
        y[m] = (rhs[m] + sign * s) / (1.0 - sign * F[0])
    return y


def exact_cell_weights(d: KernelDensity, h, n_cells, norm=1.0):
    """Hat-function integrals of the kernel over each grid cell.

    F[j] = int_cell_j (1 - s/h) rho(sigma_j + s) ds / norm, G[j] likewise
    for the rising hat.  Computed from closed-form interval moments.
    """
    nodes = h * np.arange(n_cells + 1)
    m0 = d.interval_moment(0, nodes[:-1], nodes[1:])
    m1 = (d.interval_moment(1, nodes[:-1], nodes[1:])
          - nodes[:-1] * m0)
    F = (m0 - m1 / h) / norm
    G = (m1 / h) / norm
    return F, G


def sampled_cell_weights(kvals, h):
    """Hat-function integrals when the kernel itself is piecewise linear."""
    k0, k1 = kvals[:-1], kvals[1:]
    F = h * (k0 / 3.0 + k1 / 6.0)
    G = h * (k0 / 6.0 + k1 / 3.0)
    return F, G


@dataclass
class Resolvent:
    r: GridFunction
    gamma: GridFunction
    residual: float
    kernel: KernelDensity


def _resolvent_values(d, h, n):
    mu0 = d.moment(0)
    F, G = exact_cell_weights(d, h, n, norm=mu0)
    kvals = d.density(h * np.arange(n + 1)) / mu0
    return _march_second_kind(F, G, kvals, 1.0)


@lru_cache(maxsize=16)
def resolvent(d: KernelDensity, h: float, t_max: float,
              residual_cap: float | None = None) -> Resolvent:
    """Resolvent kernel of k = rho/mu_0 on [0, t_max].

    The residual is a Richardson error estimate: the marching is repeated
    at step 2h and |r_h - r_2h|/3 bounds the true O(h^2) error of r_h.
    """
    n = int(round(t_max / h))
    if n < 4:
        raise ValueError("resolvent grid too short")
    r = _resolvent_values(d, h, n)
    r2 = _resolvent_values(d, 2.0 * h, n // 2)
    residual = float(np.max(np.abs(r[:: 2][: len(r2)] - r2))) / 3.0
    cap = 10.0 * h * h if residual_cap is None else residual_cap
    if residual > cap:
        raise ResidualTooLarge(
            f"resolvent error estimate {residual:.3e} exceeds cap {cap:.3e}")
    mu0, mu1 = d.moment(0), d.moment(1)
    rg = GridFunction(0.0, h, r)
    gamma = GridFunction(0.0, h, r - mu0 / mu1)
    return Resolvent(rg, gamma, residual, d)


@dataclass
class CorrectorSolution:
    grid: GridFunction
    limit: float
    residual: float


def _apply_resolvent(forcing, res: Resolvent):
    """Solution of mu_0 x - x*rho = mu_0*forcing, i.e. x = g + g*r."""
    vals = forcing + convolve_values(forcing, res.r.values, res.r.h)
    return vals


def _defect(d, h, xvals, forcing_vals):
    """Sup defect of mu_0 x - x*rho = f using an independent PL quadrature."""
    mu0 = d.moment(0)
    rho = d.density(h * np.arange(len(xvals)))
    conv = convolve_values(xvals, rho, h)
    return float(np.max(np.abs(mu0 * xvals - conv - forcing_vals)))


def solve_micro_corrector(d: KernelDensity, j, k, h, t_max,
                          res: Resolvent | None = None) -> CorrectorSolution:
    """Corrector x_{j,k}: mu_0 x - x*rho = xi_{j,k},  x -> mu_{j+k+1}/((j+1) mu_1).

    Starting value x(0) = mu_k/mu_0 for j = 0 and 0 for j >= 1 comes out of
    the analytic forcing automatically.
    """
    if res is None:
        res = resolvent(d, h, t_max)
    mu0 = d.moment(0)
    t = h * np.arange(len(res.r))
    xi = d.tail_moment(j, k, t)
    vals = _apply_resolvent(xi / mu0, res)
    limit = d.moment(j + k + 1) / ((j + 1) * d.moment(1))
    residual = _defect(d, h, vals, xi)
    return CorrectorSolution(GridFunction(0.0, h, vals), limit, residual)


def solve_past_corrector(d: KernelDensity, ell, h, t_max,
                         res: Resolvent | None = None) -> CorrectorSolution:
    """Past corrector w_l driven by b(t) = int_t^inf (t-a)^l rho(a) da.

    w jumps at 0 (left limit 0, right value (-1)^l mu_l / mu_0) and tends
    to (-1)^l mu_{l+1} / ((l+1) mu_1).
    """
    if res is None:
        res = resolvent(d, h, t_max)
    mu0 = d.moment(0)
    t = h * np.arange(len(res.r))
    b = np.zeros_like(t)
    for i in range(ell + 1):
        b += math.comb(ell, i) * (-1.0) ** i * d.tail_moment(ell - i, i, t)
    vals = _apply_resolvent(b / mu0, res)
    limit = (-1.0) ** ell * d.moment(ell + 1) / ((ell + 1) * d.moment(1))
    residual = _defect(d, h, vals, b)
    return CorrectorSolution(GridFunction(0.0, h, vals, left_limit=0.0),
                             limit, residual)


@dataclass
class CorrectorTable:
    """All micro and past correctors needed for an order-N expansion.

    x[(j, k)] for j + k <= N and w[l] for l <= N, each with its long-time
    limit.  Queries past t_max return the limit; limit_tolerance bounds how
    far the stored end values still are from those limits (tail stability
    plus the solver's residual estimate).
    """

    kernel: KernelDensity
    order: int
    h: float
    t_max: float
    x: dict = field(default_factory=dict)
    w: dict = field(default_factory=dict)
    x_limits: dict = field(default_factory=dict)
    w_limits: dict = field(default_factory=dict)
    residuals: dict = field(default_factory=dict)
    limit_tolerance: float = 0.0

    @classmethod
    def build(cls, d: KernelDensity, N, h, t_max):
        res = resolvent(d, h, t_max)
        table = cls(kernel=d, order=N, h=h, t_max=res.r.t_end)
        tol = res.residual
        for j in range(N + 1):
            for k in range(N + 1 - j):
                sol = solve_micro_corrector(d, j, k, h, t_max, res)
                table.x[(j, k)] = sol.grid
                table.x_limits[(j, k)] = sol.limit
                table.residuals[("x", j, k)] = sol.residual
                mid = sol.grid.value_at(table.t_max / 2.0)
                tol = max(tol, abs(sol.grid.values[-1] - mid),
                          abs(sol.grid.values[-1] - sol.limit))
        for ell in range(N + 1):
            sol = solve_past_corrector(d, ell, h, t_max, res)
            table.w[ell] = sol.grid
            table.w_limits[ell] = sol.limit
            table.residuals[("w", ell)] = sol.residual
            mid = sol.grid.value_at(table.t_max / 2.0)
            tol = max(tol, abs(sol.grid.values[-1] - mid),
                      abs(sol.grid.values[-1] - sol.limit))
        table.limit_tolerance = tol + 10.0 * h * h
        return table

    def _eval(self, g: GridFunction, limit, tau):
        tau = np.asarray(tau, dtype=float)
        scalar = tau.ndim == 0
        tau = np.atleast_1d(tau)
        if np.any(tau < 0):
            raise TableRangeExceeded("corrector queried at negative time")
        out = np.where(tau <= g.t_end,
                       np.interp(np.minimum(tau, g.t_end), g.times(), g.values),
                       limit)
        return float(out[0]) if scalar else out

    def eval_x(self, j, k, tau):
        return self._eval(self.x[(j, k)], self.x_limits[(j, k)], tau)

    def eval_w(self, ell, tau):
        return self._eval(self.w[ell], self.w_limits[ell], tau)
