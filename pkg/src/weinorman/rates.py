"""Time-dependent rate functions and their integrals.

Every rate is a nonnegative, vectorised function of time that also reports
the discontinuities inside any window, so quadrature can split there.  The
textual form understood by :func:`parse_rate` is::

    constant:1.0
    exp:0.1,0.2             # base, growth rate
    rational                # 1/(1+t); ``rational:c`` for c/(1+t)
    square:0,1,0.2,0.5      # low, high, period, duty (high phase first)
    piecewise:1,2|constant:1|rational|exp:1,0.1
"""

import math
import threading
from dataclasses import dataclass

import numpy as np

from .quadrature import DEFAULT_ATOL, DEFAULT_RTOL, integrate, integrate_intervals

__all__ = [
    "RateFunction",
    "Constant",
    "Exponential",
    "Rational",
    "SquareWave",
    "Piecewise",
    "parse_rate",
    "CumulativeIntegral",
    "cumulative",
    "weighted_integral",
]


class RateFunction:
    """Base class for nonnegative rates of time."""

    def __call__(self, t):
        raise NotImplementedError

    def breakpoints(self, lo, hi):
        """Sorted discontinuity times strictly inside ``(lo, hi)``."""
        return np.empty(0)


@dataclass(frozen=True)
class Constant(RateFunction):
    value: float

    def __post_init__(self):
        if not (math.isfinite(self.value) and self.value >= 0):
            raise ValueError(f"constant rate must be finite and >= 0, got {self.value}")

    def __call__(self, t):
        return np.full(np.shape(t), float(self.value)) if np.ndim(t) else float(self.value)

    def __str__(self):
        return f"constant:{self.value!r}"


@dataclass(frozen=True)
class Exponential(RateFunction):
    """``base * exp(growth * t)``."""

    base: float
    growth: float

    def __post_init__(self):
        if not (self.base >= 0 and math.isfinite(self.base) and math.isfinite(self.growth)):
            raise ValueError(f"invalid exponential rate ({self.base}, {self.growth})")

    def __call__(self, t):
        return self.base * np.exp(self.growth * np.asarray(t, dtype=float))

    def __str__(self):
        return f"exp:{self.base!r},{self.growth!r}"


@dataclass(frozen=True)
class Rational(RateFunction):
    """``scale / (1 + t)``."""

    scale: float = 1.0

    def __post_init__(self):
        if not (self.scale >= 0 and math.isfinite(self.scale)):
            raise ValueError(f"invalid rational scale {self.scale}")

    def __call__(self, t):
        return self.scale / (1.0 + np.asarray(t, dtype=float))

    def __str__(self):
        return "rational" if self.scale == 1.0 else f"rational:{self.scale!r}"


@dataclass(frozen=True)
class SquareWave(RateFunction):
    """Takes ``high`` on ``[kP, kP + duty*P)`` and ``low`` for the rest of each period."""

    low: float
    high: float
    period: float
    duty: float = 0.5

    def __post_init__(self):
        if not (self.low >= 0 and self.high >= 0):
            raise ValueError("square wave levels must be >= 0")
        if not self.period > 0:
            raise ValueError("square wave period must be positive")
        if not 0 < self.duty < 1:
            raise ValueError("duty must lie strictly between 0 and 1")

    def __call__(self, t):
        t = np.asarray(t, dtype=float)
        phase = np.mod(t, self.period)
        out = np.where(phase < self.duty * self.period, self.high, self.low)
        return out if out.ndim else float(out)

    def breakpoints(self, lo, hi):
        if hi <= lo:
            return np.empty(0)
        p, on = self.period, self.duty * self.period
        k0, k1 = math.floor(lo / p), math.ceil(hi / p)
        k = np.arange(k0, k1 + 1, dtype=float)
        edges = np.concatenate([k * p, k * p + on])
        edges = np.unique(edges)
        return edges[(edges > lo) & (edges < hi)]

    def __str__(self):
        return f"square:{self.low!r},{self.high!r},{self.period!r},{self.duty!r}"


@dataclass(frozen=True)
class Piecewise(RateFunction):
    """``pieces[j]`` applies on ``[joins[j-1], joins[j])``, evaluated at absolute time."""

    joins: tuple
    pieces: tuple

    def __post_init__(self):
        joins = tuple(float(x) for x in self.joins)
        object.__setattr__(self, "joins", joins)
        object.__setattr__(self, "pieces", tuple(self.pieces))
        if len(self.pieces) != len(joins) + 1:
            raise ValueError("piecewise rate needs one more piece than joins")
        if any(b <= a for a, b in zip(joins, joins[1:])) or any(j <= 0 for j in joins):
            raise ValueError("piecewise joins must be positive and strictly increasing")

    def __call__(self, t):
        t_arr = np.asarray(t, dtype=float)
        which = np.searchsorted(self.joins, t_arr, side="right")
        out = np.zeros(t_arr.shape)
        for j, piece in enumerate(self.pieces):
            mask = which == j
            if np.any(mask):
                out[mask] = piece(t_arr[mask])
        return out if out.ndim else float(out)

    def breakpoints(self, lo, hi):
        joins = np.asarray(self.joins)
        bps = [joins[(joins > lo) & (joins < hi)]]
        bounds = (0.0,) + self.joins + (math.inf,)
        for j, piece in enumerate(self.pieces):
            a, b = max(lo, bounds[j]), min(hi, bounds[j + 1])
            if b > a:
                bps.append(piece.breakpoints(a, b))
        return np.unique(np.concatenate(bps))

    def __str__(self):
        head = ",".join(repr(j) for j in self.joins)
        return "piecewise:" + "|".join([head] + [str(p) for p in self.pieces])


def _floats(text, n, name):
    parts = [p for p in text.split(",") if p.strip()]
    if len(parts) != n:
        raise ValueError(f"{name} rate expects {n} comma-separated numbers, got {text!r}")
    return [float(p) for p in parts]


def parse_rate(text):
    """Parse the canonical textual form of a rate function.

    >>> parse_rate("square:0,1,0.2,0.5")
    SquareWave(low=0.0, high=1.0, period=0.2, duty=0.5)
    """
    if isinstance(text, (int, float)):
        return Constant(float(text))
    text = text.strip()
    kind, _, args = text.partition(":")
    kind = kind.strip().lower()
    if kind == "constant":
        return Constant(*_floats(args, 1, kind))
    if kind == "exp":
        return Exponential(*_floats(args, 2, kind))
    if kind == "rational":
        return Rational(*_floats(args, 1, kind)) if args.strip() else Rational()
    if kind == "square":
        return SquareWave(*_floats(args, 4, kind))
    if kind == "piecewise":
        head, *rest = args.split("|")
        joins = [float(x) for x in head.split(",") if x.strip()]
        return Piecewise(tuple(joins), tuple(parse_rate(r) for r in rest))
    raise ValueError(f"unknown rate function {text!r}")


class CumulativeIntegral:
    """``t -> integral of source over [0, t]``, memoised on a sorted grid.

    Scalar and array queries extend the grid only between the cached point
    immediately to the left and the query, so repeated queries at increasing
    times reuse the cached prefix.  Bulk evaluations (quadrature nodes of a
    nested integral) pass ``cache=False`` to leave the grid untouched.
    """

    def __init__(self, source, atol=DEFAULT_ATOL, rtol=DEFAULT_RTOL):
        if atol <= 0 and rtol <= 0:
            raise ValueError("tolerance must be positive")
        self.source = source
        self.atol = atol
        self.rtol = rtol
        self._grid_t = np.zeros(1)
        self._grid_v = np.zeros(1)
        self._lock = threading.Lock()

    def __call__(self, t, cache=True):
        t_arr = np.asarray(t, dtype=float)
        if np.any(t_arr < 0):
            raise ValueError("cumulative integrals are defined for t >= 0")
        flat = t_arr.ravel()
        if cache:
            with self._lock:
                grid_t, grid_v = self._grid_t, self._grid_v
                vals, new_t, new_v = self._extend(flat, grid_t, grid_v)
                if new_t.size:
                    order = np.argsort(np.concatenate([grid_t, new_t]), kind="stable")
                    self._grid_t = np.concatenate([grid_t, new_t])[order]
                    self._grid_v = np.concatenate([grid_v, new_v])[order]
        else:
            vals, _, _ = self._extend(flat, self._grid_t, self._grid_v)
        vals = vals.reshape(t_arr.shape)
        return float(vals) if vals.ndim == 0 else vals

    def _extend(self, flat, grid_t, grid_v):
        uniq, inverse = np.unique(flat, return_inverse=True)
        pos = np.searchsorted(grid_t, uniq, side="left")
        hit = (pos < grid_t.size) & (grid_t[np.minimum(pos, grid_t.size - 1)] == uniq)
        out = np.empty(uniq.size)
        out[hit] = grid_v[pos[hit]]
        fresh = uniq[~hit]
        if fresh.size:
            base = np.searchsorted(grid_t, fresh, side="right") - 1
            run_start = np.r_[True, base[1:] != base[:-1]]
            left = np.where(run_start, grid_t[base], np.r_[0.0, fresh[:-1]])
            bps = self.source.breakpoints(float(left[0]), float(fresh[-1]))
            edges = np.unique(np.concatenate([left, fresh, bps]))
            lo, hi = edges[:-1], edges[1:]
            seg = np.searchsorted(fresh, 0.5 * (lo + hi))
            need = (seg < fresh.size) & (left[np.minimum(seg, fresh.size - 1)] <= lo)
            vals = integrate_intervals(
                self.source, lo[need], hi[need], atol=self.atol, rtol=self.rtol
            )
            seg_sum = np.bincount(seg[need], weights=vals, minlength=fresh.size)
            csum = np.cumsum(seg_sum)
            first = np.maximum.accumulate(np.where(run_start, np.arange(fresh.size), 0))
            out[~hit] = grid_v[base] + csum - csum[first] + seg_sum[first]
        return out[inverse], fresh, out[~hit]


def cumulative(f, atol=DEFAULT_ATOL, rtol=DEFAULT_RTOL):
    """Return the cached antiderivative of ``f`` anchored at zero."""
    return CumulativeIntegral(f, atol=atol, rtol=rtol)


def weighted_integral(a, weight, t, atol=DEFAULT_ATOL, rtol=DEFAULT_RTOL, breakpoints=()):
    """Integrate ``a(u) * weight(u, t)`` over ``u`` in ``[0, t]``.

    ``weight`` is called with an array of abscissae and the scalar upper
    limit; it may return ``(n,)`` or ``(n, k)`` values.  Nothing is cached
    since the integrand changes with ``t``.
    """
    if t < 0:
        raise ValueError("upper limit must be >= 0")

    def integrand(u):
        w = np.asarray(weight(u, t), dtype=float)
        au = np.asarray(a(u), dtype=float)
        return au[:, None] * w if w.ndim == 2 else au * w

    bps = np.concatenate([a.breakpoints(0.0, t), np.asarray(breakpoints, dtype=float)])
    return integrate(integrand, 0.0, float(t), breakpoints=bps, atol=atol, rtol=rtol)
