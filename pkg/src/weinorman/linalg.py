"""Sparse generators, matrix exponentials and product-of-exponentials evaluation."""

import math
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg
import scipy.sparse as sp

__all__ = [
    "SparseGenerator",
    "MatrixStack",
    "TimeDependentGenerator",
    "WeiNormanFactorization",
    "ExpmError",
    "KrylovStats",
    "expm_dense",
    "expm_action",
    "apply_factorization",
    "DENSE_CAP",
]

DENSE_CAP = 512


class ExpmError(RuntimeError):
    """Matrix exponential could not be formed to the requested accuracy."""


def as_sparse(A):
    if isinstance(A, SparseGenerator):
        return A.matrix
    if sp.issparse(A):
        return sp.csr_array(A)
    return sp.csr_array(np.asarray(A))


@dataclass(frozen=True, eq=False)
class SparseGenerator:
    """Square sparse matrix with canonical CSR storage.

    ``markov=True`` enforces nonnegative off-diagonal entries and zero column
    sums to within ``1e-12``.
    """

    matrix: sp.csr_array
    markov: bool = False
    label: str = ""

    def __post_init__(self):
        A = sp.csr_array(self.matrix)
        if A.ndim != 2 or A.shape[0] != A.shape[1]:
            raise ValueError(f"generator must be square, got shape {A.shape}")
        A.sum_duplicates()
        A.eliminate_zeros()
        A.sort_indices()
        object.__setattr__(self, "matrix", A)
        if self.markov:
            self.check_markov()

    @classmethod
    def from_triples(cls, dim, rows, cols, values, **kwargs):
        rows = np.asarray(rows, dtype=np.int64)
        cols = np.asarray(cols, dtype=np.int64)
        if rows.size and (rows.max() >= dim or cols.max() >= dim or min(rows.min(), cols.min()) < 0):
            raise ValueError("triple index out of range")
        pairs = set(zip(rows.tolist(), cols.tolist()))
        if len(pairs) != rows.size:
            raise ValueError("duplicate (row, col) pair")
        A = sp.coo_array((np.asarray(values), (rows, cols)), shape=(dim, dim))
        return cls(A.tocsr(), **kwargs)

    @property
    def dim(self):
        return self.matrix.shape[0]

    @property
    def dtype(self):
        return self.matrix.dtype

    @property
    def triples(self):
        coo = self.matrix.tocoo()
        return list(zip(coo.row.tolist(), coo.col.tolist(), coo.data.tolist()))

    @property
    def bandwidth(self):
        coo = self.matrix.tocoo()
        return int(np.max(np.abs(coo.row - coo.col))) if coo.nnz else 0

    @property
    def is_identity(self):
        A = self.matrix
        if A.nnz != self.dim:
            return False
        coo = A.tocoo()
        return bool(np.all(coo.row == coo.col) and np.all(coo.data == 1))

    def check_markov(self, tol=1e-12):
        A = self.matrix.tocoo()
        off = A.row != A.col
        if np.any(A.data[off] < 0):
            raise ValueError("Markov generator has a negative off-diagonal entry")
        colsum = np.asarray(self.matrix.sum(axis=0)).ravel()
        if np.any(np.abs(colsum) > tol):
            raise ValueError(f"column sums deviate from zero by {np.abs(colsum).max():.3g}")

    def toarray(self):
        return self.matrix.toarray()

    def __matmul__(self, other):
        return self.matrix @ other

    def scaled(self, c):
        return SparseGenerator(self.matrix * c, label=self.label)


class MatrixStack:
    """Fixed matrices ``M_i`` on their union sparsity pattern; ``stack(c) = sum_i c_i M_i``."""

    def __init__(self, matrices):
        mats = [as_sparse(M).astype(float) for M in matrices]
        if not mats or len({M.shape for M in mats}) != 1:
            raise ValueError("need one or more matrices of a single shape")
        pattern = sp.csr_array(sum(abs(M) for M in mats))
        pattern.sum_duplicates()
        pattern.sort_indices()
        self.shape = pattern.shape
        self._indptr = pattern.indptr.copy()
        self._indices = pattern.indices.copy()
        key = pattern.copy()
        key.data = np.arange(1, key.nnz + 1, dtype=float)
        self._data = np.zeros((len(mats), pattern.nnz))
        for i, M in enumerate(mats):
            coo = M.tocoo()
            pos = np.asarray(key[coo.row, coo.col]).ravel().astype(np.int64) - 1
            np.add.at(self._data[i], pos, coo.data)
        self._work = sp.csr_array((np.zeros(pattern.nnz), self._indices, self._indptr), shape=self.shape)

    def __len__(self):
        return self._data.shape[0]

    def __call__(self, coeffs):
        data = np.asarray(coeffs, dtype=float) @ self._data
        return sp.csr_array((data, self._indices.copy(), self._indptr.copy()), shape=self.shape)

    def matvec(self, coeffs, v):
        self._work.data = np.asarray(coeffs, dtype=float) @ self._data
        return self._work @ v


class TimeDependentGenerator:
    """``H(t) = sum_i a_i(t) H_i`` on a fixed sparsity pattern.

    The union pattern of the ``H_i`` is computed once; each evaluation only
    rescales the stacked data arrays.
    """

    def __init__(self, rates, matrices):
        if len(rates) != len(matrices):
            raise ValueError("need one rate per matrix")
        self.rates = tuple(rates)
        self._stack = MatrixStack(matrices)
        self.shape = self._stack.shape

    @property
    def dim(self):
        return self.shape[0]

    def coefficients(self, t):
        return np.array([float(r(t)) for r in self.rates])

    def breakpoints(self, lo, hi):
        bps = [np.asarray(r.breakpoints(lo, hi)) for r in self.rates if hasattr(r, "breakpoints")]
        return np.unique(np.concatenate(bps)) if bps else np.empty(0)

    def __call__(self, t):
        return self._stack(self.coefficients(t))

    def matvec(self, t, p):
        return self._stack.matvec(self.coefficients(t), p)


def expm_dense(A, cap=DENSE_CAP):
    """Dense matrix exponential (scaling and squaring with Pade approximant)."""
    if sp.issparse(A) or isinstance(A, SparseGenerator):
        A = as_sparse(A).toarray()
    A = np.asarray(A, dtype=float)
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise ValueError("expm_dense needs a square matrix")
    if A.shape[0] > cap:
        raise ValueError(f"dimension {A.shape[0]} exceeds dense cap {cap}")
    return scipy.linalg.expm(A)


@dataclass
class KrylovStats:
    matvecs: int = 0
    steps: int = 0
    rejections: int = 0
    error_estimate: float = 0.0


def _round_step(h):
    if not math.isfinite(h) or h > 1e300:
        return math.inf
    s = 10.0 ** (math.floor(math.log10(h)) - 1)
    return math.ceil(h / s) * s


def expm_action(A, v, tol=1e-10, krylov_dim=30, full_cap=DENSE_CAP, max_steps=100_000,
                max_reject=10, stats=None):
    """Approximate ``exp(A) @ v`` by Arnoldi projection with adaptive sub-steps.

    Follows the step-size strategy of EXPOKIT's ``expv``: each sub-step
    builds a Krylov basis of dimension ``krylov_dim`` for ``A`` applied to the
    current iterate, exponentiates the small augmented Hessenberg matrix and
    accepts the step when the local error estimate is below the share
    ``tol * ||v||_1 * step``.

    The number of sub-steps grows with ``||A||``.  When the predicted work
    (sub-steps times ``krylov_dim``) reaches the dimension ``n <= full_cap``,
    the basis is instead grown to the whole space, where the projection is
    exact and a single step covers the full interval.

    Parameters
    ----------
    A : SparseGenerator, sparse matrix or ndarray
    v : ndarray
    tol : float
        Requested accuracy relative to ``||v||_1``.
    krylov_dim : int
        Krylov subspace dimension per sub-step.
    full_cap : int
        Largest dimension for which a full-space basis may be used.
    stats : KrylovStats, optional
        Filled in with matvec and sub-step counts.

    Returns
    -------
    ndarray
    """
    if tol <= 0:
        raise ValueError("tol must be positive")
    A = as_sparse(A).astype(float)
    v = np.asarray(v, dtype=float)
    n = A.shape[0]
    if v.shape != (n,):
        raise ValueError(f"vector of length {v.size} does not match dimension {n}")
    if stats is None:
        stats = KrylovStats()

    anorm = float(abs(A).sum(axis=1).max()) if A.nnz else 0.0
    beta = float(np.linalg.norm(v))
    if anorm == 0.0 or beta == 0.0:
        return v.copy()
    if n == 1:
        return math.exp(A[0, 0]) * v

    abstol = tol * float(np.abs(v).sum())
    gamma, delta = 0.9, 1.2
    eps = np.finfo(float).eps
    rndoff = anorm * eps
    btol = 1e-12 * anorm

    def first_step(m):
        fact = ((m + 1) / math.e) ** (m + 1) * math.sqrt(2 * math.pi * (m + 1))
        return _round_step((1.0 / anorm) * ((fact * abstol) / (4.0 * beta * anorm)) ** (1.0 / m))

    m = min(krylov_dim, n - 1)
    t_new = first_step(m)
    if n <= full_cap and m < n and math.ceil(1.0 / t_new) * m >= n:
        m = n
    xm = 1.0 / m

    t_out, t_now = 1.0, 0.0
    w = v.copy()
    V = np.empty((m + 1, n))
    err_total = 0.0
    while t_now < t_out:
        stats.steps += 1
        if stats.steps > max_steps:
            raise ExpmError(f"expm_action exceeded {max_steps} sub-steps")
        t_step = min(t_out - t_now, t_new)
        H = np.zeros((m + 2, m + 2))
        V[0] = w / beta
        mb, happy = m, False
        for j in range(m):
            p = A @ V[j]
            stats.matvecs += 1
            # classical Gram-Schmidt, applied twice
            h = V[: j + 1] @ p
            p -= h @ V[: j + 1]
            h2 = V[: j + 1] @ p
            p -= h2 @ V[: j + 1]
            H[: j + 1, j] = h + h2
            s = float(np.linalg.norm(p))
            if s < btol or j + 1 == n:
                # invariant subspace reached: the projection is exact
                happy = True
                mb = j + 1
                t_step = t_out - t_now
                break
            H[j + 1, j] = s
            V[j + 1] = p / s
        if not happy:
            H[m + 1, m] = 1.0
            avnorm = float(np.linalg.norm(A @ V[m]))
            stats.matvecs += 1

        for ireject in range(max_reject + 1):
            mx = mb if happy else m + 2
            F = scipy.linalg.expm(t_step * H[:mx, :mx])
            if happy:
                err_loc = btol
                break
            phi1 = abs(beta * F[m, 0])
            phi2 = abs(beta * F[m + 1, 0] * avnorm)
            if phi1 > 10 * phi2:
                err_loc, xm = phi2, 1.0 / m
            elif phi1 > phi2:
                err_loc, xm = (phi1 * phi2) / (phi1 - phi2), 1.0 / m
            else:
                err_loc, xm = phi1, 1.0 / max(m - 1, 1)
            if err_loc <= delta * t_step * abstol:
                break
            if ireject == max_reject:
                raise ExpmError(
                    f"expm_action error estimate {err_loc:.3g} stays above tolerance "
                    f"after {max_reject} step reductions"
                )
            stats.rejections += 1
            t_step = _round_step(gamma * t_step * (t_step * abstol / err_loc) ** xm)

        mx = mb if happy else m + 1
        w = V[:mx].T @ (beta * F[:mx, 0])
        beta = float(np.linalg.norm(w))
        t_now += t_step
        err_total += max(err_loc, rndoff)
        if beta == 0.0:
            break
        if not happy:
            t_new = _round_step(gamma * t_step * (t_step * abstol / max(err_loc, rndoff)) ** xm)
    stats.error_estimate = err_total
    return w


@dataclass(frozen=True, eq=False)
class WeiNormanFactorization:
    """Ordered product ``exp(g_1(t) H_1) ... exp(g_m(t) H_m)``.

    ``coefficients(t)`` returns all ``g_i(t)`` at once (they usually share
    integrals); the first generator is the leftmost factor.
    """

    generators: tuple
    coefficients: object
    labels: tuple = field(default=())

    def __post_init__(self):
        gens = tuple(g if isinstance(g, SparseGenerator) else SparseGenerator(as_sparse(g))
                     for g in self.generators)
        object.__setattr__(self, "generators", gens)
        if len({g.dim for g in gens}) != 1:
            raise ValueError("all generators must share one dimension")
        if not self.labels:
            object.__setattr__(self, "labels", tuple(g.label or f"H{i + 1}" for i, g in enumerate(gens)))

    @property
    def dim(self):
        return self.generators[0].dim

    @property
    def factors(self):
        return [
            ((lambda t, i=i: float(self.coefficients(t)[i])), g)
            for i, g in enumerate(self.generators)
        ]


def apply_factorization(U, t, v, tol=1e-10, stats=None):
    """Evaluate ``U(t) v``, applying the rightmost exponential first.

    Identity factors reduce to scalar multiplication; zero coefficients are
    skipped.
    """
    if t < 0:
        raise ValueError("t must be >= 0")
    v = np.asarray(v, dtype=float)
    g = np.asarray(U.coefficients(t), dtype=float)
    if g.shape != (len(U.generators),):
        raise ValueError("coefficient count does not match factor count")
    w = v.copy()
    for gi, H in zip(g[::-1], U.generators[::-1]):
        if gi == 0.0:
            continue
        if H.is_identity:
            w = math.exp(gi) * w
        else:
            w = expm_action(H.matrix * gi, w, tol=tol, stats=stats)
    return w
