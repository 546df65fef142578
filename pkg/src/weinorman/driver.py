"""Glue between a :class:`RunConfig` and the model solvers."""

import numpy as np

from .linalg import KrylovStats
from .models import birth_death, pure_birth, sir_cohort
from .ode import ProbabilityVector, euler_solve, rk45_solve

__all__ = ["SolverFailure", "build_model", "state_labels", "initial_state", "solve_one",
           "solve_series", "reference_solution", "breakpoints", "check_distribution",
           "slack_for"]


class SolverFailure(RuntimeError):
    """A solver raised or produced an invalid distribution; the CLI exits with status 3."""


def build_model(config):
    r, n, q = config.rates, config.size, config.tolerances["quad"]
    if config.model == "birth-death":
        return birth_death.build(r["b"], r["d"], n, quad_tol=q)
    if config.model == "sir-cohort":
        return sir_cohort.build(r["lam"], r["gamma"], n, quad_tol=q)
    return pure_birth.build(r["a"], r["b"], n, quad_tol=q)


def state_labels(model):
    """Row labels; truncated models mark their lumped state with a trailing ``+``."""
    if isinstance(model, sir_cohort.CohortModel):
        return [model.space.label(i) for i in range(model.dim)]
    labels = [str(i) for i in range(model.dim)]
    labels[-1] += "+"
    return labels


def initial_state(model):
    if isinstance(model, sir_cohort.CohortModel):
        return model.space.ket(model.N, 0)
    return model.delta(0)


def breakpoints(model, t0, t1):
    """Rate discontinuities strictly inside ``(t0, t1)``."""
    fam = model.generator_family()
    return fam.breakpoints(t0, t1)


def _wei_norman(model, t, tol):
    stats = KrylovStats()
    if isinstance(model, pure_birth.PureBirthModel):
        p = model.solve_delta0(t, tol=tol, stats=stats)
    else:
        p = model.solve(t, tol=tol, stats=stats)
    return np.asarray(p, dtype=float), stats.matvecs


def _oracle(model, t):
    if isinstance(model, birth_death.BirthDeathModel):
        return np.asarray(model.poisson_solution(t), dtype=float)
    if isinstance(model, sir_cohort.CohortModel):
        return np.asarray(model.multinomial_solution(t), dtype=float)
    raise ValueError("the pure-birth model has no closed-form oracle; use wei-norman or rk45")


def solve_one(model, method, t, tolerances, p0=None, t0=0.0):
    """Distribution at ``t`` by one method, plus its deterministic work count.

    Work is Krylov matvecs for wei-norman, right-hand-side evaluations for
    rk45, steps for euler and zero for the closed forms.
    """
    if method == "wei-norman":
        return _wei_norman(model, t, tolerances["expm"])
    if method == "oracle":
        return _oracle(model, t), 0
    p0 = initial_state(model) if p0 is None else p0
    H = model.generator_family()
    if method == "rk45":
        p, st = rk45_solve(H, p0, t, rtol=tolerances["rtol"], atol=tolerances["atol"], t0=t0,
                           tstops=breakpoints(model, t0, t), full_output=True)
    elif method == "euler":
        p, st = euler_solve(H, p0, t, tolerances["euler_dt"], t0=t0, full_output=True)
    else:
        raise ValueError(f"unknown method {method!r}")
    return np.asarray(p, dtype=float), st.rhs_evals


def check_distribution(p, t, slack=0.0):
    """Validate ``p``; negatives no larger than ``slack`` (integrator noise) are zeroed first."""
    p = np.where((p < 0) & (p >= -slack), 0.0, p)
    try:
        ProbabilityVector(p, tol_sum=1e-8)
    except ValueError as exc:
        raise SolverFailure(f"invalid distribution at t={t:g}: {exc}") from None
    return np.maximum(p, 0.0)


def slack_for(method, tolerances):
    return 10 * tolerances["atol"] if method == "rk45" else 0.0


def solve_series(model, method, times, tolerances):
    """Distributions at sorted ``times``; direct integrators continue from the previous time."""
    out = []
    p_prev, t_prev = initial_state(model), 0.0
    for t in times:
        try:
            if method in ("rk45", "euler"):
                p, _ = solve_one(model, method, t, tolerances, p0=p_prev, t0=t_prev)
                p_prev, t_prev = p, t
            else:
                p, _ = solve_one(model, method, t, tolerances)
        except Exception as exc:
            raise SolverFailure(f"{method} failed at t={t:g}: {exc}") from exc
        out.append(check_distribution(p, t, slack_for(method, tolerances)))
    return out


def reference_solution(model, t):
    """Closed form where available, else a tight-tolerance rk45 run."""
    if isinstance(model, pure_birth.PureBirthModel):
        tight = {"rtol": 1e-12, "atol": 1e-14}
        return solve_one(model, "rk45", t, tight)[0]
    return _oracle(model, t)
