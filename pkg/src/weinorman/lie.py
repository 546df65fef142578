"""Commutator algebra over sets of (sparse) matrices."""

import math
from dataclasses import dataclass, field
from fractions import Fraction
from itertools import combinations

import numpy as np
import scipy.sparse as sp

from .linalg import SparseGenerator

__all__ = [
    "LieError",
    "NotClosed",
    "NotIndependent",
    "SeriesDivergence",
    "LieBasis",
    "Check",
    "VerificationReport",
    "commutator",
    "ad_power",
    "exp_ad",
    "structure_constants",
    "verify_jacobi",
    "interior",
]

MAX_SERIES_TERMS = 200


class LieError(ValueError):
    pass


class NotClosed(LieError):
    """A bracket of basis elements leaves the span of the basis."""


class NotIndependent(LieError):
    """Basis elements are linearly dependent."""


class SeriesDivergence(RuntimeError):
    """The ad-exponential series did not reach tolerance within the term cap."""


def _mat(X):
    if isinstance(X, SparseGenerator):
        return X.matrix
    if sp.issparse(X):
        return sp.csr_array(X)
    return np.asarray(X)


def _check_square_pair(X, Y):
    if X.ndim != 2 or X.shape[0] != X.shape[1]:
        raise ValueError(f"expected a square matrix, got shape {X.shape}")
    if X.shape != Y.shape:
        raise ValueError(f"dimension mismatch: {X.shape} vs {Y.shape}")


def _dense(X):
    return X.toarray() if sp.issparse(X) else np.asarray(X)


def _maxabs(X):
    if sp.issparse(X):
        return float(abs(X).max()) if X.nnz else 0.0
    return float(np.max(np.abs(X))) if X.size else 0.0


def interior(X, k):
    """Leading ``k x k`` block as a dense array."""
    return _dense(_mat(X)[:k, :k])


def commutator(X, Y):
    """``XY - YX``; sparse inputs give a sparse result."""
    X, Y = _mat(X), _mat(Y)
    _check_square_pair(X, Y)
    if sp.issparse(X) or sp.issparse(Y):
        X, Y = sp.csr_array(X), sp.csr_array(Y)
        C = sp.csr_array(X @ Y - Y @ X)
        C.eliminate_zeros()
        return C
    return X @ Y - Y @ X


def ad_power(X, Y, k):
    """``(ad X)^k Y``, i.e. ``k`` nested commutators of ``X`` with ``Y``."""
    if k < 0:
        raise ValueError("k must be >= 0")
    X, Y = _mat(X), _mat(Y)
    _check_square_pair(X, Y)
    Z = Y
    for _ in range(k):
        Z = commutator(X, Z)
    return Z


def _proportionality(Z, prev):
    """Return ``c`` with ``Z == c * prev`` (to rounding), else ``None``."""
    a, b = _dense(Z).ravel(), _dense(prev).ravel()
    nb = float(b @ b)
    if nb == 0.0:
        return None
    c = float(a @ b) / nb
    scale = max(np.max(np.abs(a)), np.max(np.abs(b)))
    if np.max(np.abs(a - c * b)) <= 64 * np.finfo(float).eps * scale * max(1.0, abs(c)):
        return c
    return None


def _tail(x, c, k0):
    """``sum_{j >= k0} x^j c^(j-k0) / j!``."""
    if k0 == 0:
        return math.exp(c * x)
    if c == 0.0:
        return x**k0 / math.factorial(k0)
    z = c * x
    if abs(z) > 1.0:
        head = sum(z**j / math.factorial(j) for j in range(k0))
        return (math.exp(z) - head) / c**k0
    term = x**k0 / math.factorial(k0)
    total, j = term, k0
    while abs(term) > 1e-18 * abs(total):
        j += 1
        term *= z / j
        total += term
    return total


def exp_ad(X, x, Y, tol=1e-14, max_terms=MAX_SERIES_TERMS):
    """``exp(x ad X) Y = e^{xX} Y e^{-xX}`` by the ad power series.

    The series stops exactly when ``(ad X)^k Y`` vanishes, and is summed in
    closed form once consecutive powers become proportional
    (``(ad X)^k Y = c (ad X)^{k-1} Y``).  Otherwise terms are added until
    their max-norm drops below ``tol``.
    """
    if tol <= 0:
        raise ValueError("tol must be positive")
    X, Y = _mat(X), _mat(Y)
    _check_square_pair(X, Y)
    sparse = sp.issparse(X) or sp.issparse(Y)
    if sparse:
        X, Y = sp.csr_array(X, dtype=float), sp.csr_array(Y, dtype=float)
    else:
        X, Y = X.astype(float), Y.astype(float)
    if x == 0:
        return Y.copy()

    total = Y.copy()
    Z = Y
    coef = 1.0
    for k in range(1, max_terms + 1):
        Znext = commutator(X, Z)
        if _maxabs(Znext) == 0.0:
            return total
        c = _proportionality(Znext, Z)
        if c is not None:
            # total holds terms 0..k-1; add sum_{j>=k} x^j/j! c^(j-k+1) Z_{k-1}
            return total + (_tail(x, c, k - 1) - coef) * Z
        Z = Znext
        coef *= x / k
        term = coef * Z
        total = total + term
        if _maxabs(term) < tol:
            return total
    raise SeriesDivergence(f"ad-exponential series not converged after {max_terms} terms")


@dataclass(frozen=True, eq=False)
class LieBasis:
    """Ordered labelled basis with structure constants ``xi[(i, j)][k]``.

    Only pairs ``i < j`` are stored; :meth:`xi` supplies antisymmetry.
    Brackets are exact on the leading ``interior_dim`` block.
    """

    elements: tuple
    labels: tuple
    structure: dict
    interior_dim: int
    exact: bool = False

    @classmethod
    def from_table(cls, elements, labels, table, interior_dim):
        """Declare a basis from ``{(a, b): {c: coeff}}`` keyed by label."""
        labels = tuple(labels)
        pos = {lab: i for i, lab in enumerate(labels)}
        structure = {}
        for (a, b), row in table.items():
            i, j = pos[a], pos[b]
            terms = {pos[c]: v for c, v in row.items() if v != 0}
            if i > j:
                i, j, terms = j, i, {k: -v for k, v in terms.items()}
            if terms:
                structure[(i, j)] = terms
        mats = tuple(sp.csr_array(_mat(E)) for E in elements)
        exact = all(_is_integer(M) for M in mats)
        return cls(mats, labels, structure, int(interior_dim), exact)

    def __len__(self):
        return len(self.elements)

    def index(self, label):
        return self.labels.index(label)

    def xi(self, i, j):
        if i == j:
            return {}
        if i < j:
            return dict(self.structure.get((i, j), {}))
        return {k: -v for k, v in self.structure.get((j, i), {}).items()}

    def bracket(self, i, j):
        """Reconstruct ``[H_i, H_j]`` from the structure constants."""
        out = sp.csr_array(self.elements[0].shape, dtype=float)
        for k, c in self.xi(i, j).items():
            out = out + float(c) * sp.csr_array(self.elements[k], dtype=float)
        return out

    def describe(self, i, j):
        terms = self.xi(i, j)
        if not terms:
            return "0"
        parts = []
        for k, c in sorted(terms.items()):
            lab = self.labels[k]
            parts.append(lab if c == 1 else f"-{lab}" if c == -1 else f"{c}*{lab}")
        return " + ".join(parts).replace("+ -", "- ")

    def table_residual(self, other):
        """Largest difference between two structure tables over all pairs."""
        n = len(self)
        worst = 0.0
        for i, j in combinations(range(n), 2):
            a, b = self.xi(i, j), other.xi(i, j)
            for k in set(a) | set(b):
                worst = max(worst, abs(float(a.get(k, 0)) - float(b.get(k, 0))))
        return worst

    def check_brackets(self, tol=0.0):
        """Compare every direct commutator with its structure-constant expansion."""
        k = self.interior_dim
        report = VerificationReport()
        for i, j in combinations(range(len(self)), 2):
            diff = sp.csr_array(commutator(self.elements[i], self.elements[j]) - self.bracket(i, j))
            resid = _maxabs(diff[:k, :k])
            report.add(f"[{self.labels[i]},{self.labels[j]}] = {self.describe(i, j)}", resid, tol)
        return report


def _is_integer(X):
    return np.issubdtype(X.dtype, np.integer)


def structure_constants(basis, interior_dim=None, tol=0.0, labels=None):
    """Compute ``[H_i, H_j] = sum_k xi_ij^k H_k`` on the interior block.

    Integer-valued bases are decomposed exactly (rational arithmetic, zero
    residual required) when ``tol == 0``.  Otherwise the least-squares
    residual must not exceed ``tol``.

    Raises
    ------
    NotIndependent
        The interior blocks of the basis are linearly dependent.
    NotClosed
        Some bracket has a component outside the span.
    """
    mats = [sp.csr_array(_mat(B)) for B in basis]
    if not mats:
        raise ValueError("empty basis")
    dim = mats[0].shape[0]
    for M in mats:
        if M.shape != (dim, dim):
            raise ValueError("all basis matrices must be square with one dimension")
    k = dim if interior_dim is None else int(interior_dim)
    if not 0 < k <= dim:
        raise ValueError(f"interior_dim must lie in 1..{dim}")
    labels = tuple(labels) if labels else tuple(f"H{i + 1}" for i in range(len(mats)))

    B = np.stack([M[:k, :k].toarray().ravel() for M in mats], axis=1)
    if np.linalg.matrix_rank(B.astype(float)) < len(mats):
        raise NotIndependent("basis elements are linearly dependent on the interior block")
    exact = tol == 0 and all(_is_integer(M) for M in mats)
    if tol == 0 and not exact:
        tol = 1e-12

    structure = {}
    for i, j in combinations(range(len(mats)), 2):
        C = commutator(mats[i], mats[j])[:k, :k].toarray().ravel()
        coeffs, *_ = np.linalg.lstsq(B.astype(float), C.astype(float), rcond=None)
        if exact:
            frac = [Fraction(c).limit_denominator(10_000) for c in coeffs]
            if all(f.denominator == 1 for f in frac):
                ints = np.array([int(f) for f in frac], dtype=np.int64)
                resid = int(np.max(np.abs(B @ ints - C))) if C.size else 0
                values = [int(v) for v in ints]
            else:
                resid = max(abs(sum(f * int(b) for f, b in zip(frac, row)) - int(c))
                            for row, c in zip(B, C))
                values = frac
            if resid != 0:
                raise NotClosed(f"[{labels[i]}, {labels[j]}] leaves the span (exact residual {resid})")
        else:
            resid = float(np.max(np.abs(B @ coeffs - C))) if C.size else 0.0
            if resid > tol:
                raise NotClosed(f"[{labels[i]}, {labels[j]}] leaves the span (residual {resid:.3g})")
            values = [float(c) if abs(c) > tol else 0 for c in coeffs]
        row = {kk: v for kk, v in enumerate(values) if v != 0}
        if row:
            structure[(i, j)] = row
    return LieBasis(tuple(mats), labels, structure, k, exact)


@dataclass
class Check:
    name: str
    residual: float
    tol: float = 0.0

    @property
    def passed(self):
        return self.residual <= self.tol


@dataclass
class VerificationReport:
    checks: list = field(default_factory=list)

    def add(self, name, residual, tol=0.0):
        self.checks.append(Check(name, float(residual), tol))

    def extend(self, other):
        self.checks.extend(other.checks)
        return self

    @property
    def passed(self):
        return all(c.passed for c in self.checks)

    @property
    def failures(self):
        return [c for c in self.checks if not c.passed]

    @property
    def max_residual(self):
        return max((c.residual for c in self.checks), default=0.0)

    def __len__(self):
        return len(self.checks)

    def summary(self):
        bad = self.failures
        head = f"{len(self.checks) - len(bad)}/{len(self.checks)} checks passed"
        if bad:
            head += f"; first failure: {bad[0].name} (residual {bad[0].residual:.3g})"
        return head


def verify_jacobi(basis, tol=0.0):
    """Check the Jacobi identity on the interior block for every basis triple."""
    k = basis.interior_dim
    mats = basis.elements
    report = VerificationReport()
    for a, b, c in combinations(range(len(mats)), 3):
        u, v, w = mats[a], mats[b], mats[c]
        J = (commutator(u, commutator(v, w)) + commutator(v, commutator(w, u))
             + commutator(w, commutator(u, v)))
        resid = _maxabs(sp.csr_array(J)[:k, :k])
        labs = basis.labels
        report.add(f"jacobi({labs[a]}, {labs[b]}, {labs[c]})", resid, tol)
    return report
