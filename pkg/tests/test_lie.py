import numpy as np
import pytest
import scipy.sparse as sp
from hypothesis import given, strategies as st
from hypothesis.extra.numpy import arrays

from weinorman.lie import (
    LieBasis, NotClosed, NotIndependent, ad_power, commutator, exp_ad, interior,
    structure_constants, verify_jacobi,
)
from weinorman.linalg import expm_dense
from weinorman.models import birth_death, pure_birth, sir_cohort
from weinorman.rates import Constant, Rational

small = arrays(np.float64, (4, 4), elements=st.floats(-3, 3))


def bd_ops(n):
    return birth_death._operators(n)


def test_commutator_self_is_zero():
    X = np.arange(9.0).reshape(3, 3)
    assert not np.any(commutator(X, X))


def test_commutator_two_by_two():
    X = np.array([[0, 1], [0, 0]])
    Y = np.array([[0, 0], [1, 0]])
    np.testing.assert_array_equal(commutator(X, Y), [[1, 0], [0, -1]])


def test_commutator_L_R_identity_on_interior():
    _, R, L, _ = bd_ops(6)
    C = commutator(L, R)
    np.testing.assert_array_equal(interior(C, 4), np.eye(4))


def test_commutator_dimension_mismatch():
    with pytest.raises(ValueError):
        commutator(np.eye(2), np.eye(3))


def test_ad_power_examples():
    _, R, _, M = bd_ops(8)
    np.testing.assert_array_equal(interior(ad_power(M, R, 0), 8), interior(R, 8))
    for k in (1, 3):
        np.testing.assert_array_equal(interior(ad_power(M, R, k), 6), interior(R, 6))


def test_exp_ad_zero_x():
    X, Y = np.diag([1.0, 2.0]), np.array([[0.0, 1.0], [1.0, 0.0]])
    np.testing.assert_array_equal(exp_ad(X, 0.0, Y), Y)


@pytest.mark.parametrize("x", [0.3, 1.0, 2.0])
def test_exp_ad_cohort_entries(x):
    m = sir_cohort.build(Constant(0.1), Constant(0.1), 5)
    S, rho, tau, Delta = m.op("S"), m.op("rho"), m.op("tau"), m.op("Delta")
    np.testing.assert_allclose(exp_ad(S, x, Delta).toarray(), np.exp(-x) * Delta.toarray(), atol=1e-14)
    np.testing.assert_allclose(exp_ad(rho, x, tau).toarray(), (tau + x * Delta).toarray(), atol=1e-14)


@given(X=small, Y=small, x=st.floats(-1, 1))
def test_exp_ad_matches_conjugation(X, Y, x):
    X = X / max(1.0, np.abs(X).sum(axis=0).max())
    tol = 1e-13
    got = exp_ad(X, x, Y, tol=tol)
    want = expm_dense(x * X) @ Y @ expm_dense(-x * X)
    scale = max(1.0, np.abs(want).max())
    assert np.abs(got - want).max() <= 10 * tol * scale * 10


@given(X=small, Y=small)
def test_antisymmetry(X, Y):
    np.testing.assert_allclose(commutator(X, Y), -commutator(Y, X), atol=0)


@given(X=small, X2=small, Y=small, a=st.floats(-2, 2), b=st.floats(-2, 2))
def test_bilinearity(X, X2, Y, a, b):
    lhs = commutator(a * X + b * X2, Y)
    rhs = a * commutator(X, Y) + b * commutator(X2, Y)
    np.testing.assert_allclose(lhs, rhs, atol=1e-10)


def test_antisymmetry_sparse(rng):
    X = sp.random_array((20, 20), density=0.1, rng=rng, format="csr")
    Y = sp.random_array((20, 20), density=0.1, rng=rng, format="csr")
    assert sp.issparse(commutator(X, Y))
    assert abs(commutator(X, Y) + commutator(Y, X)).max() == 0


def test_structure_constants_birth_death():
    ops = bd_ops(12)
    lb = structure_constants(ops, interior_dim=8, labels=("1", "R", "L", "M"))
    assert lb.exact
    i = {lab: lb.index(lab) for lab in lb.labels}
    assert lb.xi(i["L"], i["R"]) == {i["1"]: 1}
    assert lb.xi(i["M"], i["R"]) == {i["R"]: 1}
    assert lb.xi(i["L"], i["M"]) == {i["L"]: 1}
    assert lb.xi(i["1"], i["M"]) == {}
    assert lb.check_brackets().passed


def test_structure_constants_pure_birth():
    # the lumped basis Q, P_1 .. P_{m+1} is closed on the whole space
    Q, P = pure_birth._operators(6)
    lb = structure_constants((Q, *P))
    assert lb.exact
    for i in range(1, 8):
        for j in range(1, 8):
            assert lb.xi(i, j) == {}
    for i in range(1, 6):
        want = {k: v for k, v in ((i + 1, -i), (i, i - 1)) if v}
        assert lb.xi(i, 0) == want


def test_structure_constants_round_trip_cohort():
    m = sir_cohort.build(Constant(1), Constant(1), 6)
    lb = structure_constants(m.basis.elements, labels=sir_cohort.LABELS)
    assert lb.table_residual(m.basis) == 0
    rep = lb.check_brackets()
    assert rep.passed and rep.max_residual == 0


def test_antisymmetric_structure_constants():
    lb = sir_cohort.build(Constant(1), Constant(1), 4).basis
    n = len(lb.elements)
    for i in range(n):
        for j in range(n):
            a, b = lb.xi(i, j), lb.xi(j, i)
            assert {k: -v for k, v in a.items()} == b


def test_duplicate_basis_not_independent():
    X = np.array([[0, 1], [0, 0]])
    with pytest.raises(NotIndependent):
        structure_constants([X, X])


def test_not_closed():
    X = np.array([[0, 1], [0, 0]])
    Y = np.array([[0, 0], [1, 0]])
    with pytest.raises(NotClosed):
        structure_constants([X, Y])


def test_from_table_rejects_wrong_table():
    ops = bd_ops(10)
    bad = dict(birth_death.ALGEBRA)
    bad[("L", "M")] = {"R": 1}
    lb = LieBasis.from_table(ops, ("1", "R", "L", "M"), bad, 6)
    rep = lb.check_brackets()
    assert not rep.passed
    assert "[L,M]" in rep.summary()


@pytest.mark.parametrize("basis", [
    lambda: birth_death.build(Constant(1), Constant(1), 12).basis,
    lambda: sir_cohort.build(Constant(1), Constant(1), 6).basis,
    lambda: pure_birth.build(Constant(1), Rational(), 5).basis,
])
def test_jacobi_exact(basis):
    rep = verify_jacobi(basis())
    assert rep.passed and rep.max_residual == 0
