"""Direct integration of ``dp/dt = H(t) p``: Dormand-Prince 5(4) and forward Euler."""

import math
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

__all__ = ["ProbabilityVector", "ODEError", "SolverStats", "rk45_solve", "euler_solve"]


class ODEError(RuntimeError):
    """Integration failed (step size underflow)."""


class ProbabilityVector:
    """Nonnegative vector that sums to one, optionally with an overflow slot.

    Behaves like an ndarray for arithmetic via ``__array__``.
    """

    def __init__(self, values, overflow_index=None, tol_sum=1e-10, check=True):
        self.values = np.asarray(values, dtype=float)
        self.overflow_index = overflow_index
        self.tol_sum = tol_sum
        if check:
            self.validate()

    def validate(self):
        v = self.values
        if v.ndim != 1:
            raise ValueError("probability vector must be 1-D")
        if np.any(v < -1e-12):
            raise ValueError(f"negative probability {v.min():.3g}")
        if abs(1.0 - v.sum()) > self.tol_sum:
            raise ValueError(f"probabilities sum to {v.sum():.15g}")

    @property
    def overflow(self):
        return 0.0 if self.overflow_index is None else float(self.values[self.overflow_index])

    def __array__(self, dtype=None, copy=None):
        return self.values if dtype is None else self.values.astype(dtype)

    def __len__(self):
        return self.values.size

    def __getitem__(self, i):
        return self.values[i]

    def __repr__(self):
        return f"ProbabilityVector({self.values!r}, overflow_index={self.overflow_index})"


@dataclass
class SolverStats:
    rhs_evals: int = 0
    steps: int = 0
    rejected: int = 0


def _rhs(H):
    """Normalise ``H`` to ``f(t, p)``: a constant matrix, ``t -> matrix`` or an object with ``matvec``."""
    if hasattr(H, "matvec") and callable(getattr(H, "matvec")) and not sp.issparse(H):
        return H.matvec
    if sp.issparse(H) or isinstance(H, np.ndarray) or hasattr(H, "matrix"):
        A = getattr(H, "matrix", H)
        return lambda t, p: A @ p
    return lambda t, p: H(t) @ p


# Dormand-Prince 5(4) tableau
_C = np.array([0.0, 1 / 5, 3 / 10, 4 / 5, 8 / 9, 1.0, 1.0])
_A = [
    [],
    [1 / 5],
    [3 / 40, 9 / 40],
    [44 / 45, -56 / 15, 32 / 9],
    [19372 / 6561, -25360 / 2187, 64448 / 6561, -212 / 729],
    [9017 / 3168, -355 / 33, 46732 / 5247, 49 / 176, -5103 / 18656],
    [35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84],
]
_B = np.array([35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84, 0.0])
_E = _B - np.array([5179 / 57600, 0.0, 7571 / 16695, 393 / 640, -92097 / 339200, 187 / 2100, 1 / 40])


def _initial_step(f, t0, y0, f0, rtol, atol, t_end, stats):
    scale = atol + rtol * np.abs(y0)
    d0 = np.sqrt(np.mean((y0 / scale) ** 2))
    d1 = np.sqrt(np.mean((f0 / scale) ** 2))
    h0 = 1e-6 if d0 < 1e-5 or d1 < 1e-5 else 0.01 * d0 / d1
    h0 = min(h0, t_end - t0)
    y1 = y0 + h0 * f0
    f1 = f(t0 + h0, y1)
    stats.rhs_evals += 1
    d2 = np.sqrt(np.mean(((f1 - f0) / scale) ** 2)) / h0
    if max(d1, d2) <= 1e-15:
        h1 = max(1e-6, h0 * 1e-3)
    else:
        h1 = (0.01 / max(d1, d2)) ** (1 / 5)
    return min(100 * h0, h1, t_end - t0)


def rk45_solve(H, p0, t_end, rtol=1e-8, atol=1e-10, t0=0.0, tstops=(), full_output=False,
               max_steps=10_000_000):
    """Adaptive Dormand-Prince integration of ``dp/dt = H(t) p`` to ``t_end``.

    Parameters
    ----------
    H : matrix, callable or TimeDependentGenerator
        Generator; callables receive ``t`` and return a matrix.
    p0 : array_like
        Initial distribution.
    t_end : float
    rtol, atol : float
        Mixed error control per component, RMS norm.
    tstops : sequence of float
        Times the integrator must land on exactly (rate discontinuities).
    full_output : bool
        Also return :class:`SolverStats`.
    """
    if t_end < t0:
        raise ValueError("t_end must be >= t0")
    f = _rhs(H)
    y = np.array(p0, dtype=float)
    overflow = getattr(p0, "overflow_index", None)
    stats = SolverStats()
    if t_end == t0:
        out = ProbabilityVector(y, overflow, check=False)
        return (out, stats) if full_output else out

    stops = sorted(s for s in tstops if t0 < s < t_end) + [t_end]
    t = t0
    k = np.empty((7, y.size))
    k[0] = f(t, y)
    stats.rhs_evals += 1
    h = _initial_step(f, t, y, k[0], rtol, atol, stops[0], stats)
    eps = np.finfo(float).eps
    for stop in stops:
        while t < stop:
            if stats.steps >= max_steps:
                raise ODEError(f"exceeded {max_steps} steps")
            last = t + h >= stop - 16 * eps * max(1.0, abs(stop))
            if last:
                h = stop - t
            if h <= 16 * eps * max(1.0, abs(t)):
                raise ODEError(f"step size underflow at t={t:.6g}")
            for i in range(1, 7):
                k[i] = f(t + _C[i] * h, y + h * (np.asarray(_A[i]) @ k[:i]))
            stats.rhs_evals += 6
            y_new = y + h * (_B @ k)
            err = h * (_E @ k)
            scale = atol + rtol * np.maximum(np.abs(y), np.abs(y_new))
            enorm = math.sqrt(float(np.mean((err / scale) ** 2)))
            if enorm <= 1.0:
                t = stop if last else t + h
                y = y_new
                k[0] = k[6]  # FSAL
                stats.steps += 1
                factor = 10.0 if enorm == 0 else min(10.0, 0.9 * enorm ** (-0.2))
            else:
                stats.rejected += 1
                factor = max(0.2, 0.9 * enorm ** (-0.2))
            h *= factor
        if stop != t_end:
            # the rate may jump here: restart the stage derivative
            k[0] = f(t, y)
            stats.rhs_evals += 1
    out = ProbabilityVector(y, overflow, check=False)
    return (out, stats) if full_output else out


def euler_solve(H, p0, t_end, dt, t0=0.0, full_output=False):
    """Forward Euler with fixed step ``dt`` (last step shortened to land on ``t_end``).

    Step ``j`` starts at ``t0 + j*dt`` exactly, so grid times do not drift.
    """
    if dt <= 0:
        raise ValueError("dt must be positive")
    if t_end < t0:
        raise ValueError("t_end must be >= t0")
    f = _rhs(H)
    y = np.array(p0, dtype=float)
    overflow = getattr(p0, "overflow_index", None)
    nfull = int(math.floor((t_end - t0) / dt * (1 + 1e-12)))
    for j in range(nfull):
        y = y + dt * f(t0 + j * dt, y)
    rest = t_end - (t0 + nfull * dt)
    steps = nfull
    if rest > 1e-12 * dt:
        y = y + rest * f(t0 + nfull * dt, y)
        steps += 1
    out = ProbabilityVector(y, overflow, check=False)
    stats = SolverStats(rhs_evals=steps, steps=steps)
    return (out, stats) if full_output else out
