import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from linkages.expansion import (ExpansionSet, matched_initial_conditions,
                                outer_correctors, reshuffle2_lhs,
                                reshuffle2_rhs, reshuffle_lhs, reshuffle_rhs)
from linkages.kernels import KernelDensity
from linkages.polynomials import PolyFunction


EXP1 = KernelDensity.exponential(1.0)
F = PolyFunction.from_coeffs((1.0, 0.5))
PAST = PolyFunction.from_coeffs((0.0, 0.25))


def test_leading_outer_term():
    # mu_1 X_0' = f with X_0(0) fixed later; slope f(0)/mu_1 at t = 0
    outer = outer_correctors(EXP1, F, 2)
    assert outer[0].deriv_at(0.0, 1) == pytest.approx(1.0)
    assert outer[0].deriv_at(0.0, 2) == pytest.approx(0.5)


def test_matched_initial_values_exponential():
    # for the unit exponential the full eps-series of X_eps(0+) is known:
    # X_eps = eps f + I(0) + int_0^t f / mu_1 with I(0) = sum c_i (-eps)^i mu_i
    outer = matched_initial_conditions(EXP1, outer_correctors(EXP1, F, 3),
                                       PAST, 3)
    # I(0) for past t/4: c_1 = 1/4 -> I(0) = -eps/4; X(0+) = eps(1 - 1/4) + 0
    # series: X_0(0) = 0, X_1(0) = 3/4, higher zero
    assert outer[0](0.0) == pytest.approx(0.0, abs=1e-14)
    assert outer[1](0.0) == pytest.approx(0.75, abs=1e-12)
    assert outer[2](0.0) == pytest.approx(0.0, abs=1e-12)
    assert len(outer) == 3  # order N keeps terms X_0 .. X_{N-1}


def test_initial_value_matches_exact_solution():
    # for the unit exponential with this data X_eps(0+) = 0.75 eps exactly
    ex = ExpansionSet.build(EXP1, F, PAST, 2, h_micro=2e-3, t_max_micro=30.0)
    for eps in (0.1, 0.05):
        assert abs(ex.initial_value(eps) - 0.75 * eps) < 1e-8


def test_layers_decay():
    ex = ExpansionSet.build(EXP1, F, PAST, 2, h_micro=2e-3, t_max_micro=30.0)
    eps = 0.05
    t = np.array([20.0 * eps])
    Y, Z, W = ex.layer_terms(eps, t)
    assert abs(Y[0] + Z[0] + W[0]) < 1e-6


def test_order_validation():
    with pytest.raises(ValueError):
        ExpansionSet.build(EXP1, F, PAST, 0)


# ---- index reshuffle identities ------------------------------------------

@given(N=st.integers(2, 6), seed=st.integers(0, 10 ** 6))
@settings(max_examples=40, deadline=None)
def test_reshuffle_triple_random(N, seed):
    rng = np.random.default_rng(seed)
    a = rng.integers(-9, 10, size=(2 * N + 2, 2 * N + 2, 2 * N + 2)).astype(float)
    assert reshuffle_lhs(a, N) == reshuffle_rhs(a, N)


@given(N=st.integers(2, 6), seed=st.integers(0, 10 ** 6))
@settings(max_examples=40, deadline=None)
def test_reshuffle_double_random(N, seed):
    rng = np.random.default_rng(seed)
    a = rng.integers(-9, 10, size=(N + 2, N + 2)).astype(float)
    assert reshuffle2_lhs(a, N) == reshuffle2_rhs(a, N)


def test_reshuffle_hand_value():
    # N = 2, a == 1: the triple sum counts 5 index triples
    a = np.ones((6, 6, 6))
    assert reshuffle_lhs(a, 2) == 5.0
    assert reshuffle_rhs(a, 2) == 5.0
