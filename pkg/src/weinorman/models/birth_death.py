"""Immigration-death process: births at rate ``b(t)``, deaths at ``n d(t)``.

States ``0 .. n_max-1``; the last state lumps every count ``>= n_max - 1``
(births from it stay put), so the truncated generator keeps zero column
sums.  For ``N(0) = 0`` the distribution is Poisson with mean
``g2(t) = exp(-D(t)) int_0^t b(u) exp(D(u)) du``.
"""

import math
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
from scipy import stats

from ..lie import LieBasis, verify_jacobi
from ..linalg import (
    SparseGenerator,
    TimeDependentGenerator,
    WeiNormanFactorization,
    apply_factorization,
)
from ..ode import ProbabilityVector
from ..rates import cumulative, weighted_integral

__all__ = ["BirthDeathModel", "build", "truncation_for", "INTERIOR_MARGIN"]

INTERIOR_MARGIN = 4
LABELS = ("1", "R", "L", "M")
ALGEBRA = {("L", "R"): {"1": 1}, ("M", "R"): {"R": 1}, ("L", "M"): {"L": 1}}


def _operators(n_max):
    k = np.arange(n_max)
    eye = sp.identity(n_max, dtype=np.int64, format="csr")
    rows = np.r_[k[1:], n_max - 1]
    cols = np.r_[k[:-1], n_max - 1]
    R = sp.csr_array((np.ones(n_max, dtype=np.int64), (rows, cols)), shape=(n_max, n_max))
    L = sp.csr_array((k[1:].astype(np.int64), (k[:-1], k[1:])), shape=(n_max, n_max))
    M = sp.csr_array(sp.diags_array(k, format="csr", dtype=np.int64))
    return sp.csr_array(eye), R, L, M


@dataclass(frozen=True, eq=False)
class BirthDeathModel:
    b: object
    d: object
    n_max: int
    basis: LieBasis
    quad_tol: float = 1e-12
    _D: object = field(default=None, repr=False)

    @property
    def dim(self):
        return self.n_max

    @property
    def identity(self):
        return self.basis.elements[0]

    @property
    def R(self):
        return self.basis.elements[1]

    @property
    def L(self):
        return self.basis.elements[2]

    @property
    def M(self):
        return self.basis.elements[3]

    def generator_family(self):
        return TimeDependentGenerator(
            [self.b, self.d], [self.R - self.identity, self.L - self.M]
        )

    def generator(self, t):
        return SparseGenerator(self.generator_family()(t), markov=True)

    def mean(self, t):
        """``g2(t)``: the Poisson mean for ``N(0) = 0``."""
        if t == 0:
            return 0.0
        D = self._D
        Dt = D(t)
        return float(weighted_integral(
            self.b, lambda u, s: np.exp(D(u, cache=False) - Dt), t,
            atol=self.quad_tol, breakpoints=self.d.breakpoints(0.0, t),
        ))

    def coefficients(self, t):
        """``(g1, g2, g3, g4)`` at time ``t``."""
        if t == 0:
            return np.zeros(4)
        Dt = self._D(t)
        g2 = self.mean(t)
        return np.array([-g2, g2, math.expm1(Dt), -Dt])

    def factorization(self):
        return WeiNormanFactorization(
            tuple(SparseGenerator(E, label=lab) for E, lab in zip(self.basis.elements, self.basis.labels)),
            self.coefficients,
            self.basis.labels,
        )

    def solve(self, t, p0=None, tol=1e-10, stats=None):
        """Distribution at ``t`` from the product of exponentials (default ``p0 = delta_0``)."""
        p0 = self.delta(0) if p0 is None else np.asarray(p0, dtype=float)
        p = apply_factorization(self.factorization(), t, p0, tol=tol, stats=stats)
        return ProbabilityVector(p, overflow_index=self.n_max - 1, tol_sum=1e-8)

    def delta(self, n):
        v = np.zeros(self.n_max)
        v[n] = 1.0
        return v

    def poisson_solution(self, t):
        """Closed form for ``N(0) = 0``; the lumped last entry holds the tail."""
        mu = self.mean(t)
        n = np.arange(self.n_max - 1)
        p = np.empty(self.n_max)
        p[:-1] = stats.poisson.pmf(n, mu) if mu > 0 else (n == 0).astype(float)
        p[-1] = stats.poisson.sf(self.n_max - 2, mu) if mu > 0 else 0.0
        return ProbabilityVector(p, overflow_index=self.n_max - 1)

    def pgf(self, s, t):
        """Probability generating function ``E[s^N(t)]`` for ``N(0) = 0``."""
        if abs(s) > 1:
            raise ValueError("|s| must be <= 1")
        return math.exp((s - 1.0) * self.mean(t))

    def verify(self):
        """Exact bracket table and Jacobi identity on the interior block."""
        return self.basis.check_brackets().extend(verify_jacobi(self.basis))


def build(b, d, n_max, quad_tol=1e-12):
    """Assemble the truncated operators ``1, R, L, M`` and their structure constants."""
    if n_max < 2:
        raise ValueError("n_max must be >= 2")
    ops = _operators(n_max)
    interior = max(n_max - INTERIOR_MARGIN, 1)
    basis = LieBasis.from_table(ops, LABELS, ALGEBRA, interior)
    return BirthDeathModel(b, d, n_max, basis, quad_tol, cumulative(d, atol=quad_tol))


def truncation_for(mean, tail=1e-10):
    """Smallest ``n_max`` whose lumped state carries less than ``tail`` mass."""
    return int(stats.poisson.isf(tail, max(mean, 1e-300))) + 3
