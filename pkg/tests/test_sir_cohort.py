import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from weinorman.models.sir_cohort import BRACKETS, EXP_AD, CohortStateSpace, build
from weinorman.ode import rk45_solve
from weinorman.rates import Constant, Exponential


@given(N=st.integers(1, 25))
def test_state_space_bijection(N):
    sp_ = CohortStateSpace(N)
    assert sp_.count == (N + 1) * (N + 2) // 2
    idx = [sp_.index(S, I) for S, I in sp_.states]
    assert idx == list(range(sp_.count))


def test_operator_actions():
    m = build(Constant(1), Constant(1), 5)
    sp_ = m.space
    np.testing.assert_array_equal(m.op("S") @ sp_.ket(3, 2), 3 * sp_.ket(3, 2))
    np.testing.assert_array_equal(m.op("tau") @ sp_.ket(3, 2), 3 * sp_.ket(2, 3))
    assert not np.any(m.op("rho") @ sp_.ket(3, 0))
    np.testing.assert_array_equal(m.op("rho") @ sp_.ket(3, 2), 2 * sp_.ket(3, 1))
    np.testing.assert_array_equal(m.op("Delta") @ sp_.ket(3, 2), 3 * sp_.ket(2, 2))


def test_generator_examples():
    m0 = build(Constant(0), Constant(0), 4)
    assert m0.generator(1.0).matrix.nnz == 0 or abs(m0.generator(1.0).matrix).max() == 0
    lam, gam = 0.7, 0.4
    m = build(Constant(lam), Constant(gam), 4)
    H = m.generator(1.0).toarray()
    for k, (S, I) in enumerate(m.space.states):
        assert H[k, k] == pytest.approx(-(lam * S + gam * I))
    m1 = build(Constant(lam), Constant(gam), 1)
    H1 = m1.generator(0.0).toarray()
    i10, i01, i00 = m1.space.index(1, 0), m1.space.index(0, 1), m1.space.index(0, 0)
    assert H1[i01, i10] == lam and H1[i00, i01] == gam
    np.testing.assert_allclose(H1.sum(axis=0), 0)


def test_tables_complete():
    assert len(BRACKETS) == 25 and len(EXP_AD) == 25
    assert BRACKETS[("tau", "rho")] == {"Delta": -1}
    assert BRACKETS[("S", "I")] == {}


def test_verify_tables_all_pass():
    rep = build(Constant(1), Constant(1), 6).verify_tables()
    assert len(rep.checks) == 50
    assert rep.passed, rep.summary()


def test_coefficients_examples():
    m = build(Constant(0.2), Constant(0.3), 5)
    np.testing.assert_array_equal(m.coefficients(0.0), 0)
    lam, gam, t = 0.2, 0.3, 2.0
    assert m.pi2(t) == pytest.approx(lam * (math.exp(-lam * t) - math.exp(-gam * t)) / (gam - lam), rel=1e-12)
    m0 = build(Constant(0.4), Constant(0.0), 5)
    assert m0.pi2(t) == pytest.approx(-math.expm1(-0.4 * t), rel=1e-12)
    assert m0.coefficients(t)[0] == pytest.approx(0.0, abs=1e-14)


def test_multinomial_examples():
    m = build(Constant(0.5), Constant(0.2), 1)
    np.testing.assert_array_equal(np.asarray(m.multinomial_solution(0.0)), m.space.ket(1, 0))
    pi1, pi2 = m.pi(1.5)
    p = np.asarray(m.multinomial_solution(1.5))
    assert p[m.space.index(1, 0)] == pytest.approx(pi1)
    assert p[m.space.index(0, 1)] == pytest.approx(pi2)
    assert p[m.space.index(0, 0)] == pytest.approx(1 - pi1 - pi2)
    big = build(Exponential(0.1, 0.2), Constant(0.3), 40)
    assert np.asarray(big.multinomial_solution(3.0)).sum() == pytest.approx(1.0, abs=1e-12)


def test_pi_ode_examples():
    m = build(Constant(0.6), Constant(0.0), 2)
    assert m.pi_ode(0.0) == (1.0, 0.0)
    p1, p2 = m.pi_ode(2.0)
    assert p1 == pytest.approx(math.exp(-1.2), abs=1e-10) and p2 == pytest.approx(-math.expm1(-1.2), abs=1e-10)
    me = build(Exponential(0.1, 0.2), Constant(0.3), 2)
    assert me.pi_ode(3.0)[0] == pytest.approx(math.exp(-0.5 * math.expm1(0.6)), abs=1e-10)


def test_expected_susceptibles():
    m = build(Exponential(0.1, 0.2), Constant(0.3), 15)
    t = 2.5
    p = np.asarray(m.solve(t))
    assert (m.space.S * p).sum() == pytest.approx(15 * m.pi(t)[0], abs=1e-8)


@given(t=st.floats(0.2, 5.0), seed=st.integers(0, 1000))
def test_general_initial_state_vs_rk45(t, seed):
    m = build(Constant(0.4), Exponential(0.2, 0.1), 6)
    p0 = np.random.default_rng(seed).dirichlet(np.ones(m.dim))
    p = np.asarray(m.solve(t, p0=p0))
    ref = np.asarray(rk45_solve(m.generator_family(), p0, t, rtol=1e-10, atol=1e-12))
    assert np.abs(p - ref).max() <= 1e-8
