"""Matched asymptotic expansion of the slow solution.

The order-N approximation is

    Xtilde(t) = sum_{i<N} eps^i X_i(t)  +  Y_N(t) + Z_N(t) + W_N(t),

where the X_i solve the outer (slow) recursion driven by the polynomial
source, and Y, Z, W are fast boundary-layer sums built from the corrector
table evaluated at tau = t/eps.  The free constants X_i(0) are fixed by the
matching conditions so that Xtilde(0+) reproduces the true initial value
through order N.
"""

from dataclasses import dataclass
import math

import numpy as np

from .kernels import KernelDensity
from .polynomials import PolyFunction
from .volterra import CorrectorTable


def outer_correctors(d: KernelDensity, f: PolyFunction, N):
    """Slow-scale terms X_0 .. X_{N-1} with integration constants left at 0.

    mu_1 X_0' = f and, for l >= 2,

        mu_1 X_{l-1}' = sum_{k=2}^{l} (-1)^k (mu_k / k!) X_{l-k}^{(k)}.

    Each step integrates a polynomial exactly; the constant term of every
    X_i is deferred to the matching stage (derivatives do not depend on it).
    """
    mu1 = d.moment(1)
    outer = [f.scaled(1.0 / mu1).antiderivative(0.0)]
    for ell in range(2, N + 1):
        rhs = PolyFunction.zero()
        for k in range(2, ell + 1):
            muk = d.moment(k)
            rhs = rhs + outer[ell - k].derivative(k).scaled(
                (-1.0) ** k * muk / math.factorial(k))
        outer.append(rhs.scaled(1.0 / mu1).antiderivative(0.0))
    return outer


def matched_initial_conditions(d: KernelDensity, outer, past: PolyFunction, N):
    """Fix the constants X_m(0), m = 0..N-1, sequentially.

    X_0(0) = past(0); for m >= 1 the layer sums at tau -> inf must cancel
    through order eps^{N-1}, which pins

        mu_1 X_m(0) = (-1)^m past^{(m)}(0) mu_{m+1}/(m+1)!
            - sum_{q<m} X_q^{(m-q)}(0) mu_{m-q+1}/(m-q+1)!
            + sum_{q=1}^{m} sum_{k=1}^{q} (-1)^{k+1}
              / ((m-q+1)! k!) X_{q-k}^{(k+m-q)}(0) mu_{m-q+k+1}.
    """
    mu1 = d.moment(1)
    fixed = [outer[0].with_constant(float(past(0.0)))]
    for m in range(1, N):
        t1 = ((-1.0) ** m * past.deriv_at(0.0, m)
              * d.moment(m + 1) / math.factorial(m + 1))
        t2 = -sum(fixed[q].deriv_at(0.0, m - q)
                  * d.moment(m - q + 1) / math.factorial(m - q + 1)
                  for q in range(m))
        t3 = 0.0
        for q in range(1, m + 1):
            for k in range(1, q + 1):
                t3 += ((-1.0) ** (k + 1)
                       / (math.factorial(m - q + 1) * math.factorial(k))
                       * outer[q - k].deriv_at(0.0, k + m - q)
                       * d.moment(m - q + k + 1))
        fixed.append(outer[m].with_constant((t1 + t2 + t3) / mu1))
    return fixed


@dataclass
class ExpansionSet:
    """Order-N matched expansion for one kernel / source / past triple."""

    kernel: KernelDensity
    order: int
    source: PolyFunction
    past: PolyFunction
    outer: list
    table: CorrectorTable

    @classmethod
    def build(cls, d, f: PolyFunction, past: PolyFunction, N,
              h_micro=1e-3, t_max_micro=40.0, table=None):
        if N < 1:
            raise ValueError("expansion order must be >= 1")
        d.moment(N + 1)  # raises MomentDiverges if the tail is too heavy
        outer = matched_initial_conditions(
            d, outer_correctors(d, f, N), past, N)
        if table is None:
            table = CorrectorTable.build(d, N, h_micro, t_max_micro)
        elif table.order < N:
            raise ValueError("corrector table order too low")
        return cls(d, N, f, past, outer, table)

    # ---- evaluation ----------------------------------------------------

    def outer_sum(self, eps, t):
        t = np.asarray(t, dtype=float)
        out = np.zeros_like(t)
        for i, Xi in enumerate(self.outer):
            out += eps ** i * Xi(t)
        return out

    def layer_terms(self, eps, t):
        """(Y, Z, W) evaluated at physical times t (fast variable t/eps)."""
        t = np.asarray(t, dtype=float)
        tau = t / eps
        N, tab = self.order, self.table
        Y = np.zeros_like(t)
        for m in range(1, N + 1):
            for q in range(1, m + 1):
                for k in range(1, q + 1):
                    coef = (eps ** m * (-1.0) ** (k + 1)
                            / (math.factorial(k) * math.factorial(m - q)))
                    dval = self.outer[q - k].deriv_at(0.0, k + m - q)
                    if dval != 0.0:
                        Y += coef * dval * tab.eval_x(m - q, k, tau)
        Z = np.zeros_like(t)
        for m in range(1, N + 1):
            for q in range(m):
                dval = self.outer[q].deriv_at(0.0, m - q)
                if dval != 0.0:
                    Z -= (eps ** m * dval / math.factorial(m - q)
                          * tab.eval_x(m - q, 0, tau))
        x00 = tab.eval_x(0, 0, tau)
        for i in range(N):
            Z -= eps ** i * float(self.outer[i](0.0)) * x00
        W = np.zeros_like(t)
        for i in range(N + 1):
            dval = self.past.deriv_at(0.0, i)
            if dval != 0.0:
                W += eps ** i / math.factorial(i) * dval * tab.eval_w(i, tau)
        return Y, Z, W

    def evaluate(self, eps, t):
        Y, Z, W = self.layer_terms(eps, t)
        return self.outer_sum(eps, t) + Y + Z + W

    def initial_value(self, eps):
        """Xtilde(0+), using the right limits of the past correctors."""
        return float(self.evaluate(eps, np.array([0.0]))[0])


# ---- index reshuffles used to assemble the layer sums -------------------

def reshuffle_lhs(a, N):
    """S = sum_{i=1}^{N} sum_{k=1}^{i} sum_{j=0}^{N-k} a[i, j, k]."""
    a = np.asarray(a)
    return sum(a[i, j, k]
               for i in range(1, N + 1)
               for k in range(1, i + 1)
               for j in range(N - k + 1))


def reshuffle_rhs(a, N):
    """Same triple sum grouped by total order m = i + j.

    S = sum_{m=1}^{N} sum_{q=1}^{m} sum_{k=1}^{q} a[q, m-q, k]
      + sum_{m=N+1}^{2N-1} sum_{q=m+1-N}^{N} sum_{k=1}^{q+N-m} a[q, m-q, k].
    """
    a = np.asarray(a)
    s = sum(a[q, m - q, k]
            for m in range(1, N + 1)
            for q in range(1, m + 1)
            for k in range(1, q + 1))
    s += sum(a[q, m - q, k]
             for m in range(N + 1, 2 * N)
             for q in range(m + 1 - N, N + 1)
             for k in range(1, q + N - m + 1))
    return s


def reshuffle2_lhs(a, N):
    """S' = sum_{i=0}^{N-1} sum_{j=1}^{N-i} a[i, j]."""
    a = np.asarray(a)
    return sum(a[i, j]
               for i in range(N)
               for j in range(1, N - i + 1))


def reshuffle2_rhs(a, N):
    """S' grouped by total order: sum_{m=1}^{N} sum_{q=0}^{m-1} a[q, m-q]."""
    a = np.asarray(a)
    return sum(a[q, m - q]
               for m in range(1, N + 1)
               for q in range(m))
