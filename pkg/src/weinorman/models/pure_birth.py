"""Pure birth process ``n -> n+1`` at rate ``a(t) + n b(t)`` with a count cap ``m``.

States are counts ``0 .. m`` plus a final absorbing component holding
``Pr(N(t) > m)``.  Flows that would leave the tracked block are sent to that
component, which makes each truncated matrix the exact image of its
infinite counterpart under lumping.  Consequently brackets survive
truncation, and ``[P_m, Q]`` involves ``P_{m+1}``, which is generally nonzero
on the lumped space; the basis therefore runs to ``P_{m+1}``.
"""

import math
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from ..lie import LieBasis, VerificationReport, commutator, verify_jacobi
from ..linalg import (
    MatrixStack,
    SparseGenerator,
    TimeDependentGenerator,
    WeiNormanFactorization,
    expm_action,
)
from ..ode import ProbabilityVector
from ..rates import cumulative, weighted_integral

__all__ = ["PureBirthModel", "build", "INTERIOR_MARGIN"]

INTERIOR_MARGIN = 2


def _lumped(dim, rows, cols, vals):
    over = dim - 1
    rows = np.minimum(rows, over)
    A = sp.coo_array((vals, (rows, cols)), shape=(dim, dim)).tocsr()
    A.sum_duplicates()
    A.eliminate_zeros()
    return sp.csr_array(A, dtype=np.int64)


def _operators(m):
    dim = m + 2
    k = np.arange(m + 1)
    ones = np.ones(m + 1, dtype=np.int64)
    Q = _lumped(dim, np.r_[k, k + 1], np.r_[k, k], np.r_[-k, k])
    P = [_lumped(dim, np.r_[k + i, k + i - 1], np.r_[k, k], np.r_[ones, -ones])
         for i in range(1, m + 2)]
    return Q, P


def _algebra(m):
    table = {}
    for i in range(1, m + 2):
        row = {f"P{i}": i - 1} if i > 1 else {}
        if i <= m:
            row[f"P{i + 1}"] = -i
        table[(f"P{i}", "Q")] = row
    return table


@dataclass(frozen=True, eq=False)
class PureBirthModel:
    a: object
    b: object
    m: int
    basis: LieBasis
    quad_tol: float = 1e-12
    _A: object = field(default=None, repr=False)
    _B: object = field(default=None, repr=False)
    _stack: object = field(default=None, repr=False)

    @property
    def dim(self):
        return self.m + 2

    @property
    def overflow_index(self):
        return self.m + 1

    @property
    def Q(self):
        return self.basis.elements[0]

    def P(self, i):
        return self.basis.elements[i]

    def generator_family(self):
        return TimeDependentGenerator([self.a, self.b], [self.P(1), self.Q])

    def generator(self, t):
        return SparseGenerator(self.generator_family()(t), markov=True)

    def delta(self, n):
        v = np.zeros(self.dim)
        v[n] = 1.0
        return v

    def coefficients(self, t):
        """``(f, g)`` with ``f[i-1] = f_i(t)`` for ``i = 1 .. m+1`` and ``g = B(t)``."""
        nf = self.m + 1
        if t == 0:
            return np.zeros(nf), 0.0
        B = self._B
        Bt = B(t)
        f = np.empty(nf)
        f[0] = self._A(t)
        powers = np.arange(1, nf)

        def weight(u, s):
            gap = np.minimum(B(u, cache=False) - Bt, 0.0)
            with np.errstate(divide="ignore"):
                log_w = np.log(-np.expm1(gap))
            return np.exp(np.outer(log_w, powers))

        if nf > 1:
            f[1:] = weighted_integral(self.a, weight, t, atol=self.quad_tol,
                                      breakpoints=self.b.breakpoints(0.0, t))
        return f, Bt

    def _exponent(self, f):
        return self._stack(f)

    def solve_delta0(self, t, tol=1e-10, stats=None):
        """``exp(sum_i f_i P_i) delta_0``; ``Q`` annihilates ``delta_0``."""
        f, _ = self.coefficients(t)
        p = expm_action(self._exponent(f), self.delta(0), tol=tol, stats=stats)
        return ProbabilityVector(p, overflow_index=self.overflow_index, tol_sum=1e-8)

    def solve_general(self, t, v, tol=1e-10, stats=None):
        """``exp(sum_i f_i P_i) exp(g Q) v``."""
        v = np.asarray(v, dtype=float)
        f, g = self.coefficients(t)
        w = expm_action(self.Q * g, v, tol=tol, stats=stats) if g else v.copy()
        p = expm_action(self._exponent(f), w, tol=tol, stats=stats)
        return ProbabilityVector(p, overflow_index=self.overflow_index, tol_sum=1e-8)

    def factorization(self):
        """Product ``exp(f_1 P_1) ... exp(f_{m+1} P_{m+1}) exp(g Q)`` as explicit factors."""
        gens = tuple(SparseGenerator(self.P(i), label=f"P{i}") for i in range(1, self.m + 2))
        gens += (SparseGenerator(self.Q, label="Q"),)

        def coeffs(t):
            f, g = self.coefficients(t)
            return np.r_[f, g]

        return WeiNormanFactorization(gens, coeffs)

    def verify_commutation(self, margin=INTERIOR_MARGIN):
        """Exact integer checks of the P/Q relations on the interior block."""
        k = self.dim - margin
        report = VerificationReport()
        P = [None] + [self.P(i) for i in range(1, self.m + 2)]
        Q = self.Q
        for i in range(1, self.m + 1):
            for j in range(i + 1, self.m + 1):
                C = commutator(P[i], P[j])
                report.add(f"[P{i},P{j}] = 0", abs(C).max() if C.nnz else 0)
        for i in range(1, self.m):
            want = -i * P[i + 1] + (i - 1) * P[i]
            diff = sp.csr_array(commutator(P[i], Q) - want)[:k, :k]
            report.add(f"[P{i},Q] = -{i}P{i + 1} + {i - 1}P{i}", abs(diff).max() if diff.nnz else 0)
        return report

    def verify(self):
        return self.verify_commutation().extend(self.basis.check_brackets()).extend(
            verify_jacobi(self.basis))


def build(a, b, m, quad_tol=1e-12):
    """Lumped ``Q, P_1 .. P_{m+1}`` for counts ``0 .. m`` plus overflow."""
    if m < 2:
        raise ValueError("m must be >= 2")
    Q, P = _operators(m)
    labels = ("Q",) + tuple(f"P{i}" for i in range(1, m + 2))
    basis = LieBasis.from_table((Q, *P), labels, _algebra(m), m + 2)
    return PureBirthModel(a, b, m, basis, quad_tol,
                          cumulative(a, atol=quad_tol), cumulative(b, atol=quad_tol),
                          MatrixStack(P))
