"""Thin polynomial wrapper (monomial basis, ascending coefficients)."""

from dataclasses import dataclass

import numpy as np
from numpy.polynomial import polynomial as P


@dataclass(frozen=True)
class PolyFunction:
    coeffs: tuple

    @classmethod
    def from_coeffs(cls, coeffs):
        c = tuple(float(x) for x in coeffs) or (0.0,)
        return cls(c)

    @classmethod
    def zero(cls):
        return cls((0.0,))

    @property
    def degree(self):
        return len(self.coeffs) - 1

    def __call__(self, t):
        return P.polyval(np.asarray(t, dtype=float), np.asarray(self.coeffs))

    def derivative(self, order=1):
        c = P.polyder(np.asarray(self.coeffs), m=order) if order else np.asarray(self.coeffs)
        return PolyFunction.from_coeffs(c if len(c) else [0.0])

    def antiderivative(self, constant=0.0):
        return PolyFunction.from_coeffs(P.polyint(np.asarray(self.coeffs), k=[constant]))

    def deriv_at(self, t, order):
        return float(self.derivative(order)(t))

    def scaled(self, c):
        return PolyFunction.from_coeffs(c * np.asarray(self.coeffs))

    def with_constant(self, c0):
        return PolyFunction.from_coeffs((float(c0),) + self.coeffs[1:])

    def __add__(self, other):
        a, b = np.asarray(self.coeffs), np.asarray(other.coeffs)
        return PolyFunction.from_coeffs(P.polyadd(a, b))
