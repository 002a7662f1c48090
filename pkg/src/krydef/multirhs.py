"""Projected restarted GMRES for right-hand sides after the first, projection
schedules, and the whole-family driver.

For each later right-hand side the driver starts from a zero guess,
optionally projects over previously computed solutions (related right-hand
sides, one cheap one-dimensional minimum-residual projection per solution),
then alternates the compact deflation projection with GMRES(m) cycles
according to the schedule.  Projection events appear in the residual history
so schedules can be audited after the fact.
"""

import warnings
from dataclasses import dataclass, field

import numpy as np

from .deflation import minres_project_compact
from .krylov import SolveReport, _restarted_driver, _run_cycle
from .operators import as_operator

__all__ = [
    "ProjSchedule",
    "MultiRhsProblem",
    "MultiRhsResult",
    "solution_project",
    "gmres_proj_solve",
    "solve_all",
]


@dataclass(frozen=True)
class ProjSchedule:
    """When to apply the deflation projection, by 1-based cycle index.

    ``every_cycle``: before every cycle.  ``every_jth(j)``: before cycles
    1, j+1, 2j+1, ...  ``at_multiples(j)``: before cycles j, 2j, ... only —
    the variant that skips the early cycles entirely.
    """

    mode: str
    j: int = 1

    _MODES = ("every_cycle", "every_jth", "at_multiples")

    def __post_init__(self):
        if self.mode not in self._MODES:
            raise ValueError(f"unknown schedule mode {self.mode!r}")
        if self.j < 1:
            raise ValueError("schedule period must be >= 1")

    @classmethod
    def every_cycle(cls):
        return cls(mode="every_cycle")

    @classmethod
    def every_jth(cls, j):
        return cls(mode="every_jth", j=j)

    @classmethod
    def at_multiples(cls, j):
        return cls(mode="at_multiples", j=j)

    def fires(self, cycle_index):
        if cycle_index < 1:
            raise ValueError("cycle_index is 1-based")
        if self.mode == "every_cycle":
            return True
        if self.mode == "every_jth":
            return (cycle_index - 1) % self.j == 0
        return cycle_index % self.j == 0


@dataclass
class MultiRhsProblem:
    """A family of systems sharing one operator.

    ``related=True`` enables the pre-solve projection over previously computed
    solutions, which pays off when the right-hand sides are close.
    """

    a: object
    rhs: list
    related: bool = False

    def __post_init__(self):
        if not self.rhs:
            raise ValueError("need at least one right-hand side")


@dataclass
class MultiRhsResult:
    solutions: list
    reports: list
    deflation: object
    total_matvecs: int = 0
    total_vecops: int = 0

    def __post_init__(self):
        self.total_matvecs = sum(r.matvecs for r in self.reports)
        self.total_vecops = sum(r.vecops for r in self.reports)


def solution_project(a, prev_solutions, x0, r0, counters=None):
    """Project the residual over each previous solution vector in turn.

    One matvec and a one-dimensional minimum-residual update per solution:
    ``d = <Av, r> / ||Av||^2``; the residual norm is nonincreasing at every
    sub-step.  Solutions with ``A v = 0`` are skipped with a warning.
    """
    op = as_operator(a)
    if counters is None:
        counters = op.counters
    x = np.asarray(x0, dtype=np.complex128).copy()
    r = np.asarray(r0, dtype=np.complex128).copy()
    for i, sol in enumerate(prev_solutions):
        sol = np.asarray(sol, dtype=np.complex128)
        w = op.apply(sol)
        denom = float(np.real(np.vdot(w, w)))
        counters.add_vecops(1)
        if denom == 0.0:
            warnings.warn(f"previous solution {i} has A v = 0; skipped")
            continue
        d = np.vdot(w, r) / denom
        x += d * sol
        r -= d * w
        counters.add_vecops(3)
    return x, r


def gmres_proj_solve(a, b, d, cfg, schedule=None, prev_solutions=()):
    """GMRES(m) with scheduled compact projections for a later right-hand side.

    ``d`` is the deflation subspace from the first solve on the same operator
    (``d.k == 0`` degenerates to plain restarted GMRES with an identical
    history).  When ``prev_solutions`` is nonempty the solve opens with one
    projection over each of them, in chronological order.  Returns
    ``(x, SolveReport)``.
    """
    op = as_operator(a)
    counters = op.counters
    if schedule is None:
        schedule = cfg.proj_schedule or ProjSchedule.every_cycle()

    def cycle_fn(x, r, budget_left, target):
        return _run_cycle(op, x, r, cfg.m, stop_norm=target, budget=budget_left)

    project = None
    if d is not None and d.k > 0:
        if d.n != op.dim:
            raise ValueError("deflation subspace dimension does not match operator")

        def project(x, r):
            x_new, r_new = minres_project_compact(d, x, r, counters=counters)
            return x_new, r_new, float(np.linalg.norm(r_new))

    initial = None
    if prev_solutions:

        def initial(x, r):
            x_new, r_new = solution_project(op, prev_solutions, x, r,
                                            counters=counters)
            return x_new, r_new, float(np.linalg.norm(r_new))

    return _restarted_driver(op, b, None, cfg, cycle_fn, project=project,
                             fires=schedule.fires, initial_project=initial)


def solve_all(problem, cfg_first, cfg_rest, schedule=None):
    """Solve every right-hand side: deflated GMRES first, projected GMRES after.

    Per-right-hand-side failures are recorded in their reports and the run
    continues.  Returns a :class:`MultiRhsResult`; aggregate counts are the
    sums over the per-solve reports.
    """
    from .deflation import gmres_dr_solve

    a = problem.a
    xs, reports = [], []
    x1, rep1, dsub = gmres_dr_solve(a, problem.rhs[0], cfg=cfg_first)
    xs.append(x1)
    reports.append(rep1)
    prev = [x1] if problem.related else []
    for b in problem.rhs[1:]:
        x, rep = gmres_proj_solve(
            a, b, dsub, cfg_rest, schedule=schedule,
            prev_solutions=tuple(prev) if problem.related else (),
        )
        xs.append(x)
        reports.append(rep)
        if problem.related:
            prev.append(x)
    return MultiRhsResult(solutions=xs, reports=reports, deflation=dsub)
