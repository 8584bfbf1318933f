"""Age kernel densities and their moment / tail-moment algebra.

A kernel density rho(a) >= 0 on [0, inf) enters the delay operator through
its moments mu_k = int_0^inf a^k rho(a) da and the tail moments

    xi_{j,k}(t) = t^j int_t^inf a^k rho(a) da.

Everything downstream (direct solver weights, corrector forcings, matching
coefficients) is built from these, so they are computed in closed form per
family rather than by quadrature.  Quadrature is kept as an independent
cross-check route.
"""

from dataclasses import dataclass
from functools import lru_cache
import math

import numpy as np
from scipy import special
from scipy import integrate

from .errors import MomentDiverges, QuadratureFailure, ContractionViolated


def _binom(n, k):
    return math.comb(n, k)


@dataclass(frozen=True)
class KernelDensity:
    """One kernel density from a parametric family.

    Instances are immutable and hashable so expensive derived objects
    (resolvents, corrector tables) can be cached against them.
    """

    family: str
    params: tuple

    # ---- constructors -------------------------------------------------

    @classmethod
    def exponential(cls, rate):
        if rate <= 0:
            raise ValueError("rate must be positive")
        return cls("exponential", (float(rate),))

    @classmethod
    def gamma(cls, shape, rate):
        if shape < 1 or rate <= 0:
            raise ValueError("need shape >= 1 and rate > 0")
        return cls("gamma", (float(shape), float(rate)))

    @classmethod
    def poly_tail(cls, exponent, scale=None):
        """rho(a) = scale * (1+a)^(-exponent).  Default scale gives unit mass."""
        if exponent <= 2:
            raise ValueError("exponent must exceed 2 so mu_1 exists")
        if scale is None:
            scale = exponent - 1.0
        if scale <= 0:
            raise ValueError("scale must be positive")
        return cls("poly_tail", (float(exponent), float(scale)))

    @classmethod
    def tabulated(cls, samples, step, tail_rule=None):
        """Piecewise linear density from equispaced samples on [0, step*(n-1)].

        tail_rule, if given, is ("exponential", rate): beyond the table the
        density continues as samples[-1]*exp(-rate*(a-A)).  Without it the
        density is zero past the table and the kernel is rejected for
        contraction estimates.
        """
        v = tuple(float(x) for x in samples)
        if len(v) < 2:
            raise ValueError("need at least two samples")
        if step <= 0:
            raise ValueError("step must be positive")
        if any(x < 0 for x in v):
            raise ValueError("density samples must be nonnegative")
        if tail_rule is not None:
            kind, rate = tail_rule
            if kind != "exponential" or rate <= 0:
                raise ValueError("tail_rule must be ('exponential', rate>0)")
            tail_rule = ("exponential", float(rate))
        return cls("tabulated", (float(step), tail_rule, v))

    # ---- basic queries ------------------------------------------------

    @property
    def max_moment(self):
        """Largest k for which mu_k is finite (inf if all moments exist)."""
        if self.family == "poly_tail":
            p = self.params[0]
            # mu_k finite iff k < p - 1
            k = int(math.floor(p - 1.0))
            if k >= p - 1.0:
                k -= 1
            return k
        return math.inf

    def _check_moment(self, k):
        if k < 0 or k != int(k):
            raise ValueError("moment order must be a nonnegative integer")
        if k > self.max_moment:
            raise MomentDiverges(
                f"moment {k} diverges for {self.family}{self.params[:1]}")

    def density(self, a):
        """Pointwise density, vectorized in a."""
        a = np.asarray(a, dtype=float)
        if self.family == "exponential":
            lam, = self.params
            return lam * np.exp(-lam * a)
        if self.family == "gamma":
            alpha, lam = self.params
            with np.errstate(divide="ignore", invalid="ignore"):
                out = np.where(
                    a > 0,
                    lam ** alpha * a ** np.maximum(alpha - 1.0, 0.0)
                    * np.exp(-lam * a) / special.gamma(alpha),
                    lam if alpha == 1.0 else 0.0,
                )
            return out
        if self.family == "poly_tail":
            p, c = self.params
            return c * (1.0 + a) ** (-p)
        step, tail_rule, v = self.params
        v = np.asarray(v)
        A = step * (len(v) - 1)
        out = np.interp(a, step * np.arange(len(v)), v, right=0.0)
        if tail_rule is not None:
            _, r = tail_rule
            out = np.where(a > A, v[-1] * np.exp(-r * (a - A)), out)
        return out

    def moment(self, k):
        """mu_k in closed form."""
        self._check_moment(k)
        if self.family == "exponential":
            lam, = self.params
            return math.factorial(k) / lam ** k
        if self.family == "gamma":
            alpha, lam = self.params
            return special.poch(alpha, k) / lam ** k
        if self.family == "poly_tail":
            p, c = self.params
            return c * math.factorial(k) * special.gamma(p - k - 1) / special.gamma(p)
        return float(self.tail(k, 0.0))

    def tail(self, k, t):
        """int_t^inf a^k rho(a) da, vectorized in t (t >= 0)."""
        self._check_moment(k)
        t = np.asarray(t, dtype=float)
        scalar = t.ndim == 0
        t = np.atleast_1d(t)
        if np.any(t < 0):
            raise ValueError("tail moments defined for t >= 0")
        if self.family == "exponential":
            lam, = self.params
            # int_t^inf a^k lam e^{-lam a} da = (k!/lam^k) e^{-lam t} sum (lam t)^i/i!
            s = np.zeros_like(t)
            term = np.ones_like(t)
            for i in range(k + 1):
                if i > 0:
                    term = term * (lam * t) / i
                s += term
            out = math.factorial(k) / lam ** k * np.exp(-lam * t) * s
        elif self.family == "gamma":
            alpha, lam = self.params
            out = special.poch(alpha, k) / lam ** k * special.gammaincc(alpha + k, lam * t)
        elif self.family == "poly_tail":
            p, c = self.params
            out = np.zeros_like(t)
            for i in range(k + 1):
                out += (_binom(k, i) * (-1.0) ** (k - i)
                        * (1.0 + t) ** (i - p + 1.0) / (p - 1.0 - i))
            out *= c
        else:
            out = self._tabulated_tail(k, t)
        out = np.maximum(out, 0.0)
        return out[0] if scalar else out

    def tail_moment(self, j, k, t):
        """xi_{j,k}(t) = t^j * tail(k, t)."""
        t = np.asarray(t, dtype=float)
        return t ** j * self.tail(k, t)

    def interval_moment(self, k, x0, x1):
        """int_{x0}^{x1} a^k rho(a) da, vectorized over paired endpoints."""
        return self.tail(k, x0) - self.tail(k, x1)

    def normalized_kernel(self):
        """Callable a -> rho(a)/mu_0."""
        mu0 = self.moment(0)
        return lambda a: self.density(a) / mu0

    def contraction_norm(self, eps, T):
        """Truncated relative mass (1/mu_0) int_0^{T/eps} rho; must stay < 1."""
        if eps <= 0 or T <= 0:
            raise ValueError("need eps > 0 and T > 0")
        if self.family == "tabulated" and self.params[1] is None:
            raise ContractionViolated(
                "tabulated density has compact support; assert a tail rule "
                "before using it in contraction estimates")
        mu0 = self.moment(0)
        val = 1.0 - float(self.tail(0, T / eps)) / mu0
        if not val < 1.0:
            raise ContractionViolated(
                f"truncated mass not strictly below total mass (got {val})")
        return val

    # ---- quadrature cross-check ----------------------------------------

    def moment_by_quadrature(self, k, rtol=1e-10):
        """mu_k by adaptive quadrature; independent of the closed forms."""
        self._check_moment(k)
        if self.family == "tabulated":
            step, tail_rule, v = self.params
            A = step * (len(v) - 1)
            val, err = integrate.quad(
                lambda a: a ** k * self.density(a), 0.0, A,
                limit=200, epsabs=0.0, epsrel=rtol,
                points=None)
            if tail_rule is not None:
                t1, e1 = integrate.quad(
                    lambda a: a ** k * self.density(a), A, np.inf,
                    limit=200, epsabs=0.0, epsrel=rtol)
                val, err = val + t1, err + e1
        else:
            val, err = integrate.quad(
                lambda a: a ** k * self.density(a), 0.0, np.inf,
                limit=200, epsabs=0.0, epsrel=rtol)
        if val != 0.0 and err > 100 * rtol * abs(val):
            raise QuadratureFailure(
                f"moment quadrature error estimate {err} too large for value {val}")
        return val

    # ---- tabulated internals -------------------------------------------

    @lru_cache(maxsize=32)
    def _tabulated_cumtails(self, k):
        """Node values T_k(a_i) = int_{a_i}^inf a^k rho for the table grid."""
        step, tail_rule, v = self.params
        v = np.asarray(v)
        n = len(v) - 1
        nodes = step * np.arange(n + 1)
        slopes = np.diff(v) / step
        a0, a1 = nodes[:-1], nodes[1:]

        def antider(x, i_lo):
            # antiderivative of a^k*(v_i + s_i(a-a_i)) evaluated at x (array)
            vi, si, ai = v[:-1][i_lo], slopes[i_lo], a0[i_lo]
            return (vi * x ** (k + 1) / (k + 1)
                    + si * (x ** (k + 2) / (k + 2) - ai * x ** (k + 1) / (k + 1)))

        idx = np.arange(n)
        cells = antider(a1, idx) - antider(a0, idx)
        tail_extra = 0.0
        if tail_rule is not None:
            _, r = tail_rule
            A = nodes[-1]
            tail_extra = v[-1] * sum(
                _binom(k, i) * A ** (k - i) * math.factorial(i) / r ** (i + 1)
                for i in range(k + 1))
        cum = np.concatenate([np.cumsum(cells[::-1])[::-1], [0.0]]) + tail_extra
        return cum

    def _tabulated_tail(self, k, t):
        step, tail_rule, v = self.params
        v = np.asarray(v)
        n = len(v) - 1
        A = step * n
        cum = self._tabulated_cumtails(k)
        out = np.empty_like(t)
        inside = t < A
        ti = t[inside]
        i = np.minimum((ti / step).astype(int), n - 1)
        nodes = step * np.arange(n + 1)
        slopes = np.diff(v) / step

        def antider(x, i_lo):
            vi, si, ai = v[:-1][i_lo], slopes[i_lo], nodes[:-1][i_lo]
            return (vi * x ** (k + 1) / (k + 1)
                    + si * (x ** (k + 2) / (k + 2) - ai * x ** (k + 1) / (k + 1)))

        partial = antider(nodes[1:][i], i) - antider(ti, i)
        out[inside] = cum[i + 1] + partial
        beyond = ~inside
        if np.any(beyond):
            tb = t[beyond]
            if tail_rule is None:
                out[beyond] = 0.0
            else:
                _, r = tail_rule
                val = np.zeros_like(tb)
                for i2 in range(k + 1):
                    val += (_binom(k, i2) * tb ** (k - i2)
                            * math.factorial(i2) / r ** (i2 + 1))
                out[beyond] = v[-1] * np.exp(-r * (tb - A)) * val
        return out
