"""Wall-time benchmark of the product-of-exponentials path against direct integration.

Each (method, t) cell is timed on a freshly assembled model, so cached
cumulative integrals from one repetition never shorten the next.  Assembly
happens outside the timer; the timer covers coefficient quadrature plus the
exponential action, or the full integration from 0 to t.
"""

import csv
import math
import sys
import time
from dataclasses import dataclass

import numpy as np
from threadpoolctl import threadpool_limits

from .driver import build_model, check_distribution, reference_solution, slack_for, solve_one
from .models.pure_birth import PureBirthModel

__all__ = ["BenchRecord", "BENCH_HEADER", "run_bench", "write_bench_csv", "coefficient_curves",
           "write_curves_csv", "scaling_ratio"]

BENCH_HEADER = ("model", "method", "t", "wall_seconds", "linf_vs_ref", "work_units")


@dataclass(frozen=True)
class BenchRecord:
    model: str
    method: str
    t: float
    wall_seconds: float
    linf_vs_ref: float
    work_units: int
    error: str = ""

    @property
    def ok(self):
        return not self.error

    def row(self):
        if not self.ok:
            return [self.model, self.method, repr(self.t), "nan", "nan", "nan"]
        return [self.model, self.method, repr(self.t), f"{self.wall_seconds:.6e}",
                f"{self.linf_vs_ref:.6e}", str(self.work_units)]


def _time_cell(config, method, t, repeats):
    best, p, work = math.inf, None, 0
    for _ in range(repeats):
        model = build_model(config)
        start = time.perf_counter()
        p, work = solve_one(model, method, t, config.tolerances)
        elapsed = time.perf_counter() - start
        p = check_distribution(p, t, slack_for(method, config.tolerances))
        best = min(best, elapsed)
    return best, p, work


def run_bench(config, times=None, methods=None, repeats=None, log=None):
    """Time every method at every ``t``; failures become records with ``error`` set.

    Runs strictly sequentially with BLAS and OpenMP pools limited to one
    thread.  ``linf_vs_ref`` compares against the closed form, or for the
    pure-birth model against a tight-tolerance rk45 run.
    """
    times = config.times if times is None else times
    methods = config.bench_methods if methods is None else methods
    repeats = config.repeats if repeats is None else repeats
    records = []
    with threadpool_limits(limits=1):
        for t in times:
            ref = reference_solution(build_model(config), t)
            for method in methods:
                try:
                    wall, p, work = _time_cell(config, method, t, repeats)
                    rec = BenchRecord(config.model, method, float(t), max(wall, 1e-9),
                                      float(np.max(np.abs(p - ref))), int(work))
                except Exception as exc:  # recorded, run continues
                    rec = BenchRecord(config.model, method, float(t), math.nan, math.nan, 0,
                                      error=f"{type(exc).__name__}: {exc}")
                    if log is not None:
                        print(f"bench: {method} failed at t={t:g}: {rec.error}", file=log)
                records.append(rec)
    return records


def write_bench_csv(records, fh):
    w = csv.writer(fh, lineterminator="\n")
    w.writerow(BENCH_HEADER)
    for rec in records:
        w.writerow(rec.row())


def coefficient_curves(model, times):
    """Rows ``(t, name, value)`` for ``f_1 .. f_{m+1}`` and ``g`` of the pure-birth model."""
    if not isinstance(model, PureBirthModel):
        raise TypeError("coefficient curves exist only for the pure-birth model")
    rows = []
    for t in times:
        f, g = model.coefficients(float(t))
        rows.extend((float(t), f"f{i}", float(v)) for i, v in enumerate(f, start=1))
        rows.append((float(t), "g", float(g)))
    return rows


def write_curves_csv(rows, fh):
    w = csv.writer(fh, lineterminator="\n")
    w.writerow(("t", "quantity", "value"))
    for t, name, v in rows:
        w.writerow((repr(t), name, repr(v)))


def scaling_ratio(records, method, t_hi, t_lo, field="wall_seconds"):
    """``field`` at ``t_hi`` divided by its value at ``t_lo`` for one method."""
    by_t = {r.t: r for r in records if r.method == method and r.ok}
    try:
        return getattr(by_t[float(t_hi)], field) / getattr(by_t[float(t_lo)], field)
    except KeyError:
        raise ValueError(f"no successful {method} records at t={t_lo} and t={t_hi}") from None


def print_summary(records, fh=sys.stderr):
    for r in records:
        if r.ok:
            print(f"{r.method:>10} t={r.t:<8g} {r.wall_seconds:.4e}s  linf={r.linf_vs_ref:.2e}"
                  f"  work={r.work_units}", file=fh)
        else:
            print(f"{r.method:>10} t={r.t:<8g} FAILED {r.error}", file=fh)
