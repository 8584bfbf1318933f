"""Age-structured renewal dynamics and its macroscopic / layer expansions.

System solved on the characteristic-aligned grid Delta_t = eps * Delta_a:

    (eps d_t + d_a + zeta(a,t)) rho_eps = 0,
    rho_eps(0,t) = beta(t) (1 - int rho_eps),   rho_eps(.,0) = rho_I.

Macroscopic limits in closed form:

    rho_0(a,t) = rho_0(0,t) S(a,t),  rho_0(0,t) = beta/(1 + beta I),
    I(t) = int_0^inf S(a,t) da,      S(a,t) = exp(-int_0^a zeta).

rho_1 and the initial layer r_0 follow the boundary reformulations (a
second-kind Volterra equation for the layer's boundary trace, then a
two-branch Duhamel formula for the interior).
"""

from dataclasses import dataclass, field

import numpy as np
from scipy import special
from scipy.integrate import cumulative_trapezoid

from .errors import GridMismatch, GridNotAligned, ResidualTooLarge, TailMassTooLarge
from .grids import GridFunction
from .volterra import _march_second_kind, sampled_cell_weights


class RatePair:
    """Off-rate zeta(a,t), on-rate beta(t), and the decay envelope m(a).

    Built-in families carry analytic survival functions S(a,t) and their
    integrals, which the solvers use for exact per-cell decay factors.
    """

    def __init__(self, zeta, beta, envelope, envelope_tail,
                 survival, survival_integral, survival_first_moment,
                 zeta_max, beta_min, beta_max,
                 beta_prime=None, time_dependent_zeta=False, label=""):
        self.zeta = zeta
        self.beta = beta
        self.beta_prime = beta_prime
        self.envelope = envelope
        self.envelope_tail = envelope_tail
        self.survival = survival
        self.survival_integral = survival_integral
        self.survival_first_moment = survival_first_moment
        self.zeta_max = zeta_max
        self.beta_min = beta_min
        self.beta_max = beta_max
        self.time_dependent_zeta = time_dependent_zeta
        self.label = label
        if beta_min <= 0:
            raise ValueError("beta must be bounded below by a positive constant")

    @classmethod
    def constant(cls, zeta0, beta):
        """zeta(a,t) = zeta0 > 0; envelope m(a) = exp(-zeta0 a)."""
        z = float(zeta0)
        if z <= 0:
            raise ValueError("zeta0 must be positive")
        bfun, bpr, bmin, bmax = _beta_parse(beta)

        def env_tail(A, w):
            # int_A^inf (1+a)^w e^{-z a} da
            return (np.exp(z) * z ** (-(w + 1.0))
                    * special.gammaincc(w + 1.0, z * (1.0 + A))
                    * special.gamma(w + 1.0))

        return cls(
            zeta=lambda a, t: np.full_like(np.asarray(a, dtype=float), z),
            beta=bfun, beta_prime=bpr,
            envelope=lambda a: np.exp(-z * np.asarray(a, dtype=float)),
            envelope_tail=env_tail,
            survival=lambda a, t: np.exp(-z * np.asarray(a, dtype=float)),
            survival_integral=lambda t: 1.0 / z,
            survival_first_moment=lambda t: 1.0 / z ** 2,
            zeta_max=z, beta_min=bmin, beta_max=bmax,
            label=f"constant(zeta={z})")

    @classmethod
    def power_tail(cls, p, beta):
        """zeta(a,t) = p/(1+a); envelope m(a) = (1+a)^{-p}; needs p > 2."""
        p = float(p)
        if p <= 2:
            raise ValueError("need p > 2 so the first moment exists")
        bfun, bpr, bmin, bmax = _beta_parse(beta)
        return cls(
            zeta=lambda a, t: p / (1.0 + np.asarray(a, dtype=float)),
            beta=bfun, beta_prime=bpr,
            envelope=lambda a: (1.0 + np.asarray(a, dtype=float)) ** (-p),
            envelope_tail=lambda A, w: (1.0 + A) ** (w - p + 1.0) / (p - w - 1.0),
            survival=lambda a, t: (1.0 + np.asarray(a, dtype=float)) ** (-p),
            survival_integral=lambda t: 1.0 / (p - 1.0),
            survival_first_moment=lambda t: 1.0 / ((p - 1.0) * (p - 2.0)),
            zeta_max=p, beta_min=bmin, beta_max=bmax,
            label=f"power_tail(p={p})")

    def a_max_for_tail(self, tol=1e-10, w=1):
        """Smallest grid-friendly A with envelope tail int_A (1+a)^w m < tol."""
        A = 1.0
        while self.envelope_tail(A, w) > tol:
            A *= 2.0
            if A > 1e8:
                raise TailMassTooLarge("envelope tail decays too slowly")
        lo, hi = A / 2.0, A
        for _ in range(60):
            mid = 0.5 * (lo + hi)
            if self.envelope_tail(mid, w) > tol:
                lo = mid
            else:
                hi = mid
        return hi

    def a_max_pointwise(self, tol=1e-12):
        """Pointwise rule variant: smallest A with (1+A)^3 m(A) < tol * m(0)."""
        m0 = float(self.envelope(0.0))
        A = 1.0
        while (1.0 + A) ** 3 * float(self.envelope(A)) >= tol * m0:
            A *= 2.0
            if A > 1e12:
                raise TailMassTooLarge("pointwise truncation rule unattainable")
        return A


def _beta_parse(beta):
    if np.isscalar(beta):
        b = float(beta)
        if b < 0:
            raise ValueError("beta must be nonnegative")
        return (lambda t: b), (lambda t: 0.0), b if b > 0 else 1e-300, b
    b0, b1 = float(beta[0]), float(beta[1])
    if b0 - abs(b1) <= 0:
        raise ValueError("sinusoidal beta must stay positive")
    return ((lambda t: b0 + b1 * np.sin(t)),
            (lambda t: b1 * np.cos(t)),
            b0 - abs(b1), b0 + abs(b1))


@dataclass
class AgeDensityField:
    """Density samples rho(a_i, t_n) on the aligned rectangular grid."""

    a_step: float
    t_step: float
    A_max: float
    T: float
    values: np.ndarray
    envelope_constant: float | None = None
    envelope_ok: bool = True

    @property
    def n_a(self):
        return self.values.shape[0] - 1

    @property
    def n_t(self):
        return self.values.shape[1] - 1

    def ages(self):
        return self.a_step * np.arange(self.values.shape[0])

    def times(self):
        return self.t_step * np.arange(self.values.shape[1])

    def time_index(self, t, tol=1e-9):
        x = t / self.t_step
        n = int(round(x))
        if abs(x - n) > tol or not (0 <= n <= self.n_t):
            raise GridNotAligned(f"time {t} is not on the field grid")
        return n


def _trapz_weights(n, h):
    w = np.full(n, h)
    w[0] = w[-1] = h / 2.0
    return w


def solve_rho0(r: RatePair, t, ages):
    """Zeroth-order profile rho_0(., t) in closed form."""
    b = r.beta(t)
    I = r.survival_integral(t)
    return b / (1.0 + b * I) * r.survival(ages, t)


def rho0_boundary(r: RatePair, t):
    b = r.beta(t)
    return b / (1.0 + b * r.survival_integral(t))


def rho0_first_moment(r: RatePair, t):
    """mu_{1,0}(t) = int a rho_0(a,t) da."""
    return rho0_boundary(r, t) * r.survival_first_moment(t)


def rho0_time_derivative(r: RatePair, t, ages, fd_step=1e-4):
    """d_t rho_0(., t): analytic when zeta is time independent and beta'
    is available, centered finite differences otherwise."""
    if not r.time_dependent_zeta and r.beta_prime is not None:
        b, bp = r.beta(t), r.beta_prime(t)
        I = r.survival_integral(t)
        return bp / (1.0 + b * I) ** 2 * r.survival(ages, t)
    tm = max(t - fd_step, 0.0)
    tp = t + fd_step
    return (solve_rho0(r, tp, ages) - solve_rho0(r, tm, ages)) / (tp - tm)


def solve_rho1(r: RatePair, t, ages, fd_step=1e-4):
    """First-order profile rho_1(., t).

    rho_1(a,t) = rho_1(0,t) S(a,t) - S(a,t) int_0^a d_t rho_0(tau,t)/S(tau,t) dtau,
    with the boundary value fixed by rho_1(0,t) = -beta int rho_1.
    """
    S = r.survival(ages, t)
    dtr0 = rho0_time_derivative(r, t, ages, fd_step)
    g = cumulative_trapezoid(dtr0 / S, ages, initial=0.0)
    b = r.beta(t)
    I = r.survival_integral(t)
    D = np.trapezoid(S * g, ages)
    rho10 = b * D / (1.0 + b * I)
    return rho10 * S - S * g


def solve_rho_eps(r: RatePair, rho_init, eps, a_step, A_max, T,
                  tail_tol=1e-8) -> AgeDensityField:
    """March the renewal system along characteristics.

    Exact survival-ratio decay per cell (midpoint-frozen time when zeta
    depends on t), explicit renewal boundary closure with one Picard
    correction when beta_max * Delta_a > 0.1.
    """
    na = int(round(A_max / a_step))
    nt = int(round(T / (eps * a_step)))
    dt = eps * a_step
    ages = a_step * np.arange(na + 1)
    w = _trapz_weights(na + 1, a_step)
    rho_I = np.asarray(rho_init(ages) if callable(rho_init) else rho_init,
                       dtype=float)
    if rho_I.shape != ages.shape:
        raise GridMismatch("initial profile does not match the age grid")
    if np.any(rho_I < 0):
        raise ValueError("initial density must be nonnegative")
    mu0_init = w @ rho_I
    if mu0_init > 1.0 + 1e-12:
        raise ValueError("initial mass exceeds 1 (positivity precondition)")
    menv = r.envelope(ages)
    c_init = float(np.max(rho_I / menv))
    tail_bound = max(c_init, r.beta_max) * float(r.envelope_tail(A_max, 1))
    if tail_bound > tail_tol:
        raise TailMassTooLarge(
            f"envelope tail beyond A_max is {tail_bound:.2e} > {tail_tol:.0e}")

    vals = np.empty((na + 1, nt + 1))
    vals[:, 0] = rho_I
    picard = r.beta_max * a_step > 0.1
    static_decay = None
    if not r.time_dependent_zeta:
        S = r.survival(ages, 0.0)
        static_decay = S[1:] / S[:-1]
    for n in range(nt):
        t_next = (n + 1) * dt
        if static_decay is not None:
            decay = static_decay
        else:
            t_mid = (n + 0.5) * dt
            Sm = r.survival(ages, t_mid)
            decay = Sm[1:] / Sm[:-1]
        vals[1:, n + 1] = vals[:-1, n] * decay
        q = w @ vals[:, n]
        bnew = r.beta(t_next) * (1.0 - q)
        if picard:
            vals[0, n + 1] = bnew
            q2 = w @ vals[:, n + 1]
            bnew = r.beta(t_next) * (1.0 - q2)
        vals[0, n + 1] = max(bnew, 0.0)

    c_env = float(np.max(vals / menv[:, None]))
    fieldv = AgeDensityField(a_step, dt, A_max, T, vals,
                             envelope_constant=c_env,
                             envelope_ok=bool(np.isfinite(c_env)))
    return fieldv


def mass_balance_residual(fieldv: AgeDensityField, r: RatePair):
    """Sup over steps of |eps d_t mu_0 - rho(0,t) + int zeta rho| at midpoints.

    eps d_t mu_0 is formed from the stored field, so eps itself is
    recovered from the aligned grids (eps = t_step / a_step).
    """
    eps = fieldv.t_step / fieldv.a_step
    ages = fieldv.ages()
    w = _trapz_weights(len(ages), fieldv.a_step)
    worst = 0.0
    for n in range(fieldv.n_t):
        mid = 0.5 * (fieldv.values[:, n] + fieldv.values[:, n + 1])
        t_mid = (n + 0.5) * fieldv.t_step
        mu_prev = w @ fieldv.values[:, n]
        mu_next = w @ fieldv.values[:, n + 1]
        loss = w @ (r.zeta(ages, t_mid) * mid)
        res = abs(eps * (mu_next - mu_prev) / fieldv.t_step - mid[0] + loss)
        worst = max(worst, res)
    return worst


@dataclass
class InitialLayer:
    """Initial layer field on microscopic time, plus its boundary trace."""

    field: AgeDensityField
    trace: GridFunction
    forcing: GridFunction
    residual: float


def solve_initial_layer(r: RatePair, rho_init, a_step, A_max, t_max,
                        residual_cap=None) -> InitialLayer:
    """Layer r_0 with initial defect d_0 = rho_I - rho_0(.,0).

    Boundary trace x solves the second-kind equation x + k*x = b with
    k(s) = beta(0) S(s,0) and
    b(t) = -beta(0) int_0^inf d_0(u) S(u+t,0)/S(u,0) du;
    the interior follows by transporting x forward (t > a) or the initial
    defect down its characteristic (t <= a).
    """
    na = int(round(A_max / a_step))
    nt = int(round(t_max / a_step))
    ages = a_step * np.arange(na + 1)
    rho_I = np.asarray(rho_init(ages) if callable(rho_init) else rho_init,
                       dtype=float)
    d0 = rho_I - solve_rho0(r, 0.0, ages)
    b0 = r.beta(0.0)
    a_ext = a_step * np.arange(na + nt + 1)
    S_ext = r.survival(a_ext, 0.0)
    S = S_ext[: na + 1]
    w = _trapz_weights(na + 1, a_step)
    wd0 = w * d0 / S
    windows = np.lib.stride_tricks.sliding_window_view(S_ext, na + 1)
    b = -b0 * (windows[: nt + 1] @ wd0)

    kvals = b0 * S_ext[: nt + 1]
    F, G = sampled_cell_weights(kvals, a_step)
    x = _march_second_kind(F, G, b, -1.0)
    # Richardson error estimate: repeat at twice the step
    F2, G2 = sampled_cell_weights(kvals[::2], 2.0 * a_step)
    x2 = _march_second_kind(F2, G2, b[::2], -1.0)
    defect = float(np.max(np.abs(x[::2][: len(x2)] - x2))) / 3.0
    scale = max(1.0, float(np.max(np.abs(b))))
    cap = 100.0 * a_step ** 2 * scale if residual_cap is None else residual_cap
    if defect > cap:
        raise ResidualTooLarge(
            f"layer boundary error estimate {defect:.2e} exceeds {cap:.2e}")

    vals = np.empty((na + 1, nt + 1))
    for n in range(nt + 1):
        cut = min(n, na + 1)
        if cut > 0:
            i = np.arange(cut)
            vals[i, n] = x[n - i] * S[i]
        if cut <= na:
            vals[cut:, n] = d0[: na + 1 - cut] * S[cut:] / S[: na + 1 - cut]

    fieldv = AgeDensityField(a_step, a_step, A_max, t_max, vals)
    return InitialLayer(fieldv, GridFunction(0.0, a_step, x),
                        GridFunction(0.0, a_step, b), defect)


def lyapunov(u, a_step):
    """H[u] = |int u| + int |u| on the grid."""
    u = np.asarray(u, dtype=float)
    return abs(np.trapezoid(u, dx=a_step)) + np.trapezoid(np.abs(u), dx=a_step)


def weighted_error(field_a: AgeDensityField, other, w=1, rates=None):
    """Per-time-step int (1+a)^w |A - B| da, plus the analytic envelope tail
    beyond A_max when a RatePair is supplied (edge-calibrated upper bound).
    """
    if isinstance(other, AgeDensityField):
        if (abs(field_a.a_step - other.a_step) > 1e-12
                or field_a.values.shape != other.values.shape):
            raise GridMismatch("fields live on different grids")
        bvals = other.values
    else:
        bvals = np.asarray(other, dtype=float)
        if bvals.ndim == 1:
            bvals = bvals[:, None]
        if bvals.shape[0] != field_a.values.shape[0]:
            raise GridMismatch("profile does not match the age grid")
    ages = field_a.ages()
    diff = np.abs(field_a.values - bvals)
    out = np.trapezoid((1.0 + ages)[:, None] ** w * diff, dx=field_a.a_step,
                       axis=0)
    if rates is not None:
        m_edge = float(rates.envelope(field_a.A_max))
        c_edge = diff[-1, :] / m_edge
        out = out + c_edge * float(rates.envelope_tail(field_a.A_max, w))
    return out
