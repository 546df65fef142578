import math

import numpy as np
import pytest
import scipy.sparse as sp
from scipy import stats
from hypothesis import given, strategies as st

from weinorman.linalg import (
    KrylovStats, MatrixStack, SparseGenerator, TimeDependentGenerator,
    WeiNormanFactorization, apply_factorization, expm_action, expm_dense,
)
from weinorman.models import birth_death, pure_birth, sir_cohort
from weinorman.rates import Constant, Exponential, Rational, SquareWave


def test_expm_dense_examples():
    np.testing.assert_array_equal(expm_dense(np.zeros((3, 3))), np.eye(3))
    np.testing.assert_allclose(expm_dense(np.diag([1.0, 2.0])), np.diag([math.e, math.e ** 2]), rtol=1e-14)
    np.testing.assert_allclose(expm_dense(np.array([[0.0, 1.0], [0.0, 0.0]])), [[1, 1], [0, 1]], atol=1e-15)


def test_expm_dense_cap():
    with pytest.raises(ValueError):
        expm_dense(np.zeros((10, 10)), cap=5)


def test_expm_action_zero_and_diagonal():
    v = np.array([0.2, 0.3, 0.5])
    np.testing.assert_array_equal(expm_action(sp.csr_array((3, 3)), v), v)
    d = np.array([-1.0, 0.5, -3.0])
    np.testing.assert_allclose(expm_action(sp.diags_array(d), v), np.exp(d) * v, rtol=1e-10)


def test_expm_action_pure_birth_sum_vs_dense():
    model = pure_birth.build(Constant(1.0), Rational(), 20)
    f, _ = model.coefficients(1.0)
    A = model._exponent(f)
    v = model.delta(0)
    tol = 1e-10
    want = expm_dense(A.toarray()) @ v
    assert np.abs(expm_action(A, v, tol=tol) - want).max() <= 10 * tol


@pytest.mark.parametrize("n", [2, 5, 17, 40, 64])
@pytest.mark.parametrize("krylov_dim", [4, 30])
def test_expm_action_matches_dense(rng, n, krylov_dim):
    A = rng.normal(size=(n, n)) * (rng.random((n, n)) < 0.3) * 2.0
    v = rng.normal(size=n)
    tol = 1e-10
    want = expm_dense(A) @ v
    got = expm_action(sp.csr_array(A), v, tol=tol, krylov_dim=krylov_dim)
    assert np.abs(got - want).max() <= 10 * tol * max(1.0, np.abs(v).sum())


def test_expm_action_long_time_uses_substeps_below_full_cap(rng):
    n = 80
    G = rng.random((n, n)) * (rng.random((n, n)) < 0.1)
    np.fill_diagonal(G, 0)
    G -= np.diag(G.sum(axis=0))
    v = np.full(n, 1.0 / n)
    stats = KrylovStats()
    got = expm_action(sp.csr_array(30 * G), v, stats=stats, full_cap=0)
    assert stats.steps > 1
    np.testing.assert_allclose(got, expm_dense(30 * G) @ v, atol=1e-9)


@given(seed=st.integers(0, 2**31), scale=st.floats(0.01, 50))
def test_markov_generator_conserves_and_stays_nonnegative(seed, scale):
    rng = np.random.default_rng(seed)
    n = 25
    G = rng.random((n, n)) * (rng.random((n, n)) < 0.2)
    np.fill_diagonal(G, 0)
    G -= np.diag(G.sum(axis=0))
    gen = SparseGenerator(sp.csr_array(scale * G), markov=True)
    v = rng.dirichlet(np.ones(n))
    w = expm_action(gen, v)
    assert abs(w.sum() - v.sum()) <= 1e-10
    assert w.min() >= -1e-12


def test_sparse_generator_validation():
    g = SparseGenerator.from_triples(2, [1, 1], [0, 1], [1.0, 0.0])
    assert g.dim == 2
    with pytest.raises(ValueError):
        SparseGenerator.from_triples(2, [0, 0], [1, 1], [1.0, 2.0])
    with pytest.raises(ValueError):
        SparseGenerator.from_triples(2, [2], [0], [1.0])
    with pytest.raises(ValueError):
        SparseGenerator(sp.csr_array(np.array([[-1.0, 0.0], [0.5, 0.0]])), markov=True)
    with pytest.raises(ValueError):
        SparseGenerator(sp.csr_array(np.array([[-1.0, -1.0], [1.0, 1.0]])), markov=True)


def test_matrix_stack_and_time_generator():
    A = sp.csr_array(np.array([[-1.0, 0.0], [1.0, 0.0]]))
    B = sp.csr_array(np.array([[0.0, 2.0], [0.0, -2.0]]))
    np.testing.assert_allclose(MatrixStack([A, B])([2.0, 0.5]).toarray(), (2 * A + 0.5 * B).toarray())
    H = TimeDependentGenerator([Constant(2.0), SquareWave(0, 1, 1.0, 0.5)], [A, B])
    np.testing.assert_allclose(H.coefficients(0.25), [2.0, 1.0])
    np.testing.assert_allclose(H.matvec(0.75, np.array([1.0, 1.0])), (2 * A) @ np.ones(2))
    np.testing.assert_allclose(H.breakpoints(0, 2), [0.5, 1.0, 1.5])


def test_apply_factorization_t0_identity():
    m = birth_death.build(Constant(1), Constant(1), 10)
    v = np.linspace(1, 2, 10)
    v /= v.sum()
    np.testing.assert_array_equal(apply_factorization(m.factorization(), 0.0, v), v)


def test_apply_factorization_birth_death_poisson():
    m = birth_death.build(Constant(1), Constant(1), 30)
    p = apply_factorization(m.factorization(), 2.0, m.delta(0))
    mu = -math.expm1(-2.0)
    n = np.arange(29)
    want = stats.poisson.pmf(n, mu)
    np.testing.assert_allclose(p[:-1], want, atol=1e-12)


def test_apply_factorization_cohort_multinomial():
    m = sir_cohort.build(Constant(0.5), Constant(0.5), 10)
    p = apply_factorization(m.factorization(), 1.0, m.space.ket(10, 0))
    np.testing.assert_allclose(p, np.asarray(m.multinomial_solution(1.0)), atol=1e-12)


def test_factorization_dimension_check():
    with pytest.raises(ValueError):
        WeiNormanFactorization(
            (SparseGenerator(sp.eye_array(2, format="csr")), SparseGenerator(sp.eye_array(3, format="csr"))),
            lambda t: np.zeros(2),
        )


def _derivative_check(model, p0, times, h=1e-4):
    U = model.factorization()
    H = model.generator_family()
    for t in times:
        plus = apply_factorization(U, t + h, p0, tol=1e-13)
        minus = apply_factorization(U, t - h, p0, tol=1e-13)
        fd = (plus - minus) / (2 * h)
        exact = H.matvec(t, apply_factorization(U, t, p0, tol=1e-13))
        scale = np.abs(exact).max()
        assert np.abs(fd - exact).max() <= 1e-5 * scale, t


def test_derivative_birth_death():
    m = birth_death.build(Exponential(1.0, 0.1), Constant(0.7), 40)
    p0 = m.delta(3)
    _derivative_check(m, p0, [0.4, 1.3, 3.0])


def test_derivative_cohort():
    m = sir_cohort.build(Exponential(0.1, 0.2), Constant(0.3), 8)
    p0 = np.zeros(m.dim)
    p0[m.space.index(6, 1)] = 0.5
    p0[m.space.index(3, 2)] = 0.5
    _derivative_check(m, p0, [0.5, 2.0, 4.0])


def test_derivative_pure_birth():
    m = pure_birth.build(Constant(1.0), Rational(), 30)
    p0 = m.delta(2)
    _derivative_check(m, p0, [0.5, 2.0, 6.0])
