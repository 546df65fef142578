"""Surveillance cohort of ``N`` individuals moving S -> I -> R.

Kets ``|S, I>`` with ``S + I <= N`` are indexed with ``S`` descending in the
outer loop and ``I`` ascending inside, so ``|N, 0>`` is index 0.  The state
space is finite, so every bracket holds exactly on the whole matrix.
"""

import math
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
from scipy.integrate import solve_ivp
from scipy.special import gammaln

from ..lie import LieBasis, VerificationReport, exp_ad, verify_jacobi
from ..linalg import (
    SparseGenerator,
    TimeDependentGenerator,
    WeiNormanFactorization,
    apply_factorization,
)
from ..ode import ProbabilityVector
from ..rates import cumulative, weighted_integral

__all__ = ["CohortStateSpace", "CohortModel", "build", "LABELS", "BRACKETS", "EXP_AD"]

LABELS = ("S", "I", "Delta", "rho", "tau")

# [X, Y] keyed by (X, Y)
BRACKETS = {
    ("S", "S"): {}, ("S", "I"): {}, ("S", "Delta"): {"Delta": -1}, ("S", "rho"): {}, ("S", "tau"): {"tau": -1},
    ("I", "S"): {}, ("I", "I"): {}, ("I", "Delta"): {}, ("I", "rho"): {"rho": -1}, ("I", "tau"): {"tau": 1},
    ("Delta", "S"): {"Delta": 1}, ("Delta", "I"): {}, ("Delta", "Delta"): {}, ("Delta", "rho"): {}, ("Delta", "tau"): {},
    ("rho", "S"): {}, ("rho", "I"): {"rho": 1}, ("rho", "Delta"): {}, ("rho", "rho"): {}, ("rho", "tau"): {"Delta": 1},
    ("tau", "S"): {"tau": 1}, ("tau", "I"): {"tau": -1}, ("tau", "Delta"): {}, ("tau", "rho"): {"Delta": -1}, ("tau", "tau"): {},
}


# exp(x ad X) Y as {label: coefficient function of x}
def _one(x):
    return 1.0


def _x(x):
    return x


def _neg_x(x):
    return -x


def _decay(x):
    return math.exp(-x)


def _grow(x):
    return math.exp(x)


EXP_AD = {
    ("S", "S"): {"S": _one}, ("S", "I"): {"I": _one}, ("S", "Delta"): {"Delta": _decay},
    ("S", "rho"): {"rho": _one}, ("S", "tau"): {"tau": _decay},
    ("I", "S"): {"S": _one}, ("I", "I"): {"I": _one}, ("I", "Delta"): {"Delta": _one},
    ("I", "rho"): {"rho": _decay}, ("I", "tau"): {"tau": _grow},
    ("Delta", "S"): {"S": _one, "Delta": _x}, ("Delta", "I"): {"I": _one},
    ("Delta", "Delta"): {"Delta": _one}, ("Delta", "rho"): {"rho": _one}, ("Delta", "tau"): {"tau": _one},
    ("rho", "S"): {"S": _one}, ("rho", "I"): {"I": _one, "rho": _x}, ("rho", "Delta"): {"Delta": _one},
    ("rho", "rho"): {"rho": _one}, ("rho", "tau"): {"tau": _one, "Delta": _x},
    ("tau", "S"): {"S": _one, "tau": _x}, ("tau", "I"): {"I": _one, "tau": _neg_x},
    ("tau", "Delta"): {"Delta": _one}, ("tau", "rho"): {"rho": _one, "Delta": _neg_x},
    ("tau", "tau"): {"tau": _one},
}


class CohortStateSpace:
    """Bijection between ``(S, I)`` with ``S + I <= N`` and ``0 .. count-1``."""

    def __init__(self, N):
        if N < 1:
            raise ValueError("cohort size must be >= 1")
        self.N = int(N)
        self.states = [(S, I) for S in range(N, -1, -1) for I in range(N - S + 1)]
        self.count = len(self.states)
        arr = np.array(self.states)
        self.S = arr[:, 0]
        self.I = arr[:, 1]

    def index(self, S, I):
        if S < 0 or I < 0 or S + I > self.N:
            raise IndexError(f"state ({S}, {I}) outside the cohort of size {self.N}")
        j = self.N - S
        return j * (j + 1) // 2 + I

    def ket(self, S, I):
        v = np.zeros(self.count)
        v[self.index(S, I)] = 1.0
        return v

    def label(self, i):
        S, I = self.states[i]
        return f"{S}:{I}"


def _operators(space):
    n = space.count
    S, I = space.S, space.I
    idx = np.arange(n)
    Sop = sp.csr_array(sp.diags_array(S, format="csr", dtype=np.int64))
    Iop = sp.csr_array(sp.diags_array(I, format="csr", dtype=np.int64))

    def shift(weight, dS, dI):
        ok = weight > 0
        rows = [space.index(s + dS, i + dI) for s, i in zip(S[ok], I[ok])]
        return sp.csr_array((weight[ok].astype(np.int64), (rows, idx[ok])), shape=(n, n))

    Delta = shift(S, -1, 0)
    rho = shift(I, 0, -1)
    tau = shift(S, -1, 1)
    return Sop, Iop, Delta, rho, tau


def _pair_table():
    return {(a, b): row for (a, b), row in BRACKETS.items() if LABELS.index(a) < LABELS.index(b)}


@dataclass(frozen=True, eq=False)
class CohortModel:
    lam: object
    gamma: object
    space: CohortStateSpace
    basis: LieBasis
    quad_tol: float = 1e-12
    _Lam: object = field(default=None, repr=False)
    _Gam: object = field(default=None, repr=False)

    @property
    def N(self):
        return self.space.N

    @property
    def dim(self):
        return self.space.count

    def op(self, label):
        return self.basis.elements[self.basis.index(label)]

    def generator_family(self):
        return TimeDependentGenerator(
            [self.gamma, self.lam],
            [self.op("rho") - self.op("I"), self.op("tau") - self.op("S")],
        )

    def generator(self, t):
        return SparseGenerator(self.generator_family()(t), markov=True)

    def pi2(self, t):
        """Probability one individual is infectious at ``t``."""
        if t == 0:
            return 0.0
        Lam, Gam = self._Lam, self._Gam
        Gt = Gam(t)
        bps = self.gamma.breakpoints(0.0, t)
        return float(weighted_integral(
            self.lam, lambda u, s: np.exp(-Lam(u, cache=False) + Gam(u, cache=False) - Gt), t,
            atol=self.quad_tol, breakpoints=bps,
        ))

    def pi(self, t):
        return math.exp(-self._Lam(t)), self.pi2(t)

    def coefficients(self, t):
        """``(g1, ..., g5)`` for the factor order Delta, tau, S, rho, I."""
        if t == 0:
            return np.zeros(5)
        Lt, Gt = self._Lam(t), self._Gam(t)
        p2 = self.pi2(t)
        eL = math.exp(Lt)
        g1 = eL * (-math.expm1(-Lt) - p2)
        return np.array([g1, eL * p2, -Lt, math.expm1(Gt), -Gt])

    def factorization(self):
        gens = tuple(SparseGenerator(E, label=lab) for E, lab in zip(self.basis.elements, LABELS))
        order = ("Delta", "tau", "S", "rho", "I")
        return WeiNormanFactorization(
            tuple(gens[LABELS.index(o)] for o in order), self.coefficients, order
        )

    def solve(self, t, p0=None, tol=1e-10, stats=None):
        p0 = self.space.ket(self.N, 0) if p0 is None else np.asarray(p0, dtype=float)
        p = apply_factorization(self.factorization(), t, p0, tol=tol, stats=stats)
        return ProbabilityVector(p, tol_sum=1e-8)

    def multinomial_solution(self, t):
        """Closed form for the initial state ``|N, 0>``."""
        pi1, pi2 = self.pi(t)
        pi3 = max(1.0 - pi1 - pi2, 0.0)
        S, I = self.space.S, self.space.I
        R = self.N - S - I
        logc = gammaln(self.N + 1) - gammaln(S + 1) - gammaln(I + 1) - gammaln(R + 1)
        with np.errstate(divide="ignore", invalid="ignore"):
            logp = (logc + np.where(S > 0, S * np.log(pi1), 0.0)
                    + np.where(I > 0, I * np.log(pi2), 0.0)
                    + np.where(R > 0, R * np.log(pi3), 0.0))
        return ProbabilityVector(np.exp(logp))

    def pi_ode(self, t, tol=1e-12):
        """Integrate the single-individual chain ``d(pi1, pi2)/dt`` numerically."""
        if t == 0:
            return 1.0, 0.0

        def rhs(s, y):
            lam, gam = float(self.lam(s)), float(self.gamma(s))
            return [-lam * y[0], lam * y[0] - gam * y[1]]

        stops = np.unique(np.concatenate([
            [0.0], self.lam.breakpoints(0.0, t), self.gamma.breakpoints(0.0, t), [t]]))
        y = np.array([1.0, 0.0])
        for a, b in zip(stops[:-1], stops[1:]):
            sol = solve_ivp(rhs, (a, b), y, method="DOP853", rtol=tol, atol=tol * 1e-2)
            if not sol.success:
                raise RuntimeError(f"pi ODE failed: {sol.message}")
            y = sol.y[:, -1]
        return float(y[0]), float(y[1])

    def verify_tables(self, xs=(0.3, 1.0, 2.0), tol=1e-12):
        """All brackets and ad-exponentials against the closed-form tables."""
        report = VerificationReport()
        ops = dict(zip(LABELS, self.basis.elements))
        for (a, b), row in BRACKETS.items():
            lhs = sp.csr_array(ops[a] @ ops[b] - ops[b] @ ops[a])
            rhs = sum((c * ops[k] for k, c in row.items()), sp.csr_array(lhs.shape, dtype=np.int64))
            diff = sp.csr_array(lhs - rhs)
            report.add(f"[{a},{b}] = {_show(row)}", abs(diff).max() if diff.nnz else 0)
        for (a, b), row in EXP_AD.items():
            worst = 0.0
            for x in xs:
                got = exp_ad(ops[a], x, ops[b])
                want = sum(f(x) * ops[k].astype(float) for k, f in row.items())
                diff = sp.csr_array(got - want)
                worst = max(worst, abs(diff).max() if diff.nnz else 0.0)
            report.add(f"exp(x ad {a}) {b}", worst, tol)
        return report

    def verify(self):
        return self.verify_tables().extend(self.basis.check_brackets()).extend(verify_jacobi(self.basis))


def _show(row):
    if not row:
        return "0"
    return " + ".join(k if c == 1 else f"-{k}" for k, c in row.items())


def build(lam, gamma, N, quad_tol=1e-12):
    """Cohort operators on the full ``(N+1)(N+2)/2``-state space."""
    space = CohortStateSpace(N)
    ops = _operators(space)
    basis = LieBasis.from_table(ops, LABELS, _pair_table(), space.count)
    return CohortModel(lam, gamma, space, basis, quad_tol,
                       cumulative(lam, atol=quad_tol), cumulative(gamma, atol=quad_tol))
