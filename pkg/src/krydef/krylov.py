"""Arnoldi factorizations and the non-deflated solvers: restarted GMRES,
full GMRES, eigenvector-augmented GMRES, and a BiCGStab baseline.

Residual bookkeeping convention shared by every driver here and in
:mod:`krydef.deflation`: within a cycle the residual norm is tracked in
coefficient space through an incremental QR of the reduced matrix, so cycles
can terminate as soon as the estimate crosses the target without spending a
matrix-vector product; the restart residual is the short recurrence
``r = V (c - H d)``.  One true-residual recomputation runs at declared
convergence via the operator's uncounted apply, so reported matvec counts
equal the algorithmic work.  Convergence means the residual norm improved by
``rtol`` relative to the first residual of the solve (``x0 = 0`` by default,
making that ``||b||``).
"""

import warnings
from dataclasses import dataclass, field

import numpy as np

from . import _kernels
from .errors import ZeroVectorError
from .numkernel import BREAKDOWN_TOL, IncrementalQR, orthonormalize_against
from .operators import as_operator

__all__ = [
    "SolveConfig",
    "SolveReport",
    "KrylovFactorization",
    "arnoldi_extend",
    "gmres_cycle",
    "gmres_restarted",
    "full_gmres",
    "gmres_e_cycle",
    "gmres_e_restarted",
    "bicgstab",
]


@dataclass
class SolveConfig:
    """Knobs for one solve: cycle size m, relative tolerance, matvec budget,
    deflation count k (where applicable), and a projection schedule for the
    multi-rhs driver."""

    m: int
    rtol: float = 1e-6
    max_matvecs: int = 100_000
    k: int = 0
    proj_schedule: object = None

    def __post_init__(self):
        if self.m < 1:
            raise ValueError("m must be >= 1")
        if not 0.0 < self.rtol < 1.0:
            raise ValueError("rtol must lie in (0, 1)")
        if self.k < 0:
            raise ValueError("k must be >= 0")


@dataclass
class SolveReport:
    """Outcome of one right-hand-side solve.

    ``residual_history`` rows are ``(matvecs_so_far, ||r||/||r0||, event)``
    with event one of ``cycle``, ``projection``, ``converged``; at least one
    row per cycle.  ``final_relative_residual`` is always the recomputed true
    residual.
    """

    converged: bool
    final_relative_residual: float
    matvecs: int
    vecops: int
    residual_history: list = field(default_factory=list)
    breakdown: bool = False


@dataclass
class KrylovFactorization:
    """Basis/reduced-matrix pair satisfying  A V[:, :size] = V[:, :vcols] H.

    ``v`` has orthonormal columns (``vcols`` of them valid), ``h`` is the
    reduced matrix with ``size`` valid columns.  For a plain Arnoldi run the
    valid block of ``h`` is upper Hessenberg with ``vcols = size + 1``; after
    a deflated restart the leading block is full.  On happy breakdown the
    last reduced column ends in a zero row and ``vcols == size``.
    """

    v: np.ndarray
    h: np.ndarray
    size: int
    vcols: int
    breakdown: bool = False

    @classmethod
    def start(cls, r0, capacity):
        r0 = np.asarray(r0, dtype=np.complex128)
        beta = float(np.linalg.norm(r0))
        if beta == 0.0:
            raise ZeroVectorError("cannot start an Arnoldi factorization from zero")
        n = r0.shape[0]
        v = np.zeros((n, capacity + 1), dtype=np.complex128, order="F")
        h = np.zeros((capacity + 1, capacity), dtype=np.complex128)
        v[:, 0] = r0 / beta
        return cls(v=v, h=h, size=0, vcols=1)

    @property
    def capacity(self):
        return self.h.shape[1]


def _arnoldi_steps(op, fact, max_steps, inc=None, stop_norm=0.0, budget=None):
    """Advance the factorization by Arnoldi steps; shared inner loop.

    Appends columns to ``inc`` (when given) and stops early once its residual
    estimate reaches ``stop_norm``, on happy breakdown, or when ``budget``
    matvecs have been spent.  Returns the number of steps taken.
    """
    counters = op.counters
    v, h = fact.v, fact.h
    steps = 0
    while fact.size < fact.capacity and steps < max_steps and not fact.breakdown:
        if budget is not None and steps >= budget:
            break
        j = fact.size
        w = op.apply(v[:, j])
        steps += 1
        wnorm_pre = float(np.linalg.norm(w))
        coeffs = np.zeros(fact.vcols, dtype=np.complex128)
        _kernels.mgs2(v, fact.vcols, w, coeffs)
        h[: fact.vcols, j] = coeffs
        new_norm = float(np.linalg.norm(w))
        counters.add_vecops(4 * fact.vcols + 3)
        if new_norm <= BREAKDOWN_TOL * wnorm_pre or new_norm == 0.0:
            h[fact.vcols, j] = 0.0
            fact.size = j + 1
            fact.breakdown = True
            if inc is not None:
                inc.append(h[: fact.vcols + 1, j])
            break
        h[fact.vcols, j] = new_norm
        v[:, fact.vcols] = w / new_norm
        fact.size = j + 1
        fact.vcols += 1
        if inc is not None:
            inc.append(h[: fact.vcols, j])
            if float(np.max(inc.residual_norms())) <= stop_norm:
                break
    return steps


def arnoldi_extend(a, fact, steps):
    """Extend a factorization by up to ``steps`` Arnoldi steps.

    Happy breakdown truncates the extension and is flagged on the returned
    (same, mutated) factorization.
    """
    op = as_operator(a)
    _arnoldi_steps(op, fact, steps)
    return fact


@dataclass
class _CycleResult:
    x: np.ndarray
    r: np.ndarray
    rnorm: float
    fact: KrylovFactorization
    chat: np.ndarray
    d: np.ndarray
    steps: int


def _run_cycle(op, x, r, m, seed=None, stop_norm=0.0, budget=None):
    """One minimum-residual cycle over an m-dimensional (possibly seeded) space.

    ``seed`` is ``None`` for a plain cycle started from ``r``, or a tuple
    ``(v_init, h_init, c_init)`` from a deflated restart with
    ``r = v_init @ c_init``.  The cycle stops early once the coefficient-space
    residual estimate reaches ``stop_norm`` or ``budget`` matvecs are spent.
    """
    counters = op.counters
    n = op.dim
    v = np.zeros((n, m + 1), dtype=np.complex128, order="F")
    h = np.zeros((m + 1, m), dtype=np.complex128)
    if seed is None:
        beta = float(np.linalg.norm(r))
        if beta == 0.0:
            raise ZeroVectorError("cycle started from a zero residual")
        v[:, 0] = r / beta
        c_init = np.array([beta], dtype=np.complex128)
        j0, vc0 = 0, 1
    else:
        v_init, h_init, c_init = seed
        j0 = h_init.shape[1]
        vc0 = v_init.shape[1]
        v[:, :vc0] = v_init
        h[:vc0, :j0] = h_init
    fact = KrylovFactorization(v=v, h=h, size=j0, vcols=vc0)
    inc = IncrementalQR(c_init, m + 1, m)
    for j in range(j0):
        inc.append(h[:vc0, j])
    if float(np.max(inc.residual_norms())) > stop_norm:
        _arnoldi_steps(op, fact, m - j0, inc=inc, stop_norm=stop_norm, budget=budget)
    size, vcols = fact.size, fact.vcols
    if size == 0:
        return _CycleResult(x, r, float(np.linalg.norm(r)), fact,
                            c_init.copy(), np.zeros(0, np.complex128), 0)
    d = inc.solve()
    x = x + v[:, :size] @ d
    counters.add_vecops(size)
    chat = np.zeros(vcols, dtype=np.complex128)
    chat[: c_init.shape[0]] = c_init
    chat -= h[:vcols, :size] @ d
    r = v[:, :vcols] @ chat
    counters.add_vecops(vcols)
    rnorm = float(np.linalg.norm(chat))
    return _CycleResult(x, r, rnorm, fact, chat, d, fact.size - j0)


def gmres_cycle(a, x0, r0, m):
    """One full GMRES(m) cycle (no early stop).

    Requires ``r0 = b - A x0``.  Returns ``(x_new, r_new, fact, d)`` where
    ``d`` minimizes ``||beta e1 - H d||`` and ``r_new`` comes from the short
    recurrence (no extra matvec).
    """
    op = as_operator(a)
    res = _run_cycle(op, np.asarray(x0, dtype=np.complex128),
                     np.asarray(r0, dtype=np.complex128), m)
    return res.x, res.r, res.fact, res.d


def _verify_true_residual(op, b, x, beta0, target):
    r_true = b - op.apply_uncounted(x)
    tnorm = float(np.linalg.norm(r_true))
    return tnorm <= target, r_true, tnorm


def _restarted_driver(op, b, x0, cfg, cycle_fn, project=None, fires=None,
                      initial_project=None):
    """Shared restart loop: optional initial projection, then per cycle an
    optional scheduled projection followed by one adaptive cycle, with
    verified convergence.  ``cycle_fn(x, r, budget_left, target) -> _CycleResult``."""
    counters = op.counters
    mv0, vo0 = counters.snapshot()
    b = np.asarray(b, dtype=np.complex128)
    if b.shape != (op.dim,):
        raise ValueError(f"rhs shape {b.shape} does not match operator dim {op.dim}")
    if x0 is None:
        x = np.zeros(op.dim, dtype=np.complex128)
        r = b.copy()
    else:
        x = np.asarray(x0, dtype=np.complex128).copy()
        if np.any(x != 0.0):
            r = b - op.apply(x)
        else:
            r = b.copy()
    beta0 = float(np.linalg.norm(r))
    history = []

    def _finish(converged, final_rel, breakdown=False):
        return SolveReport(
            converged=converged,
            final_relative_residual=final_rel,
            matvecs=counters.matvecs - mv0,
            vecops=counters.vecops - vo0,
            residual_history=history,
            breakdown=breakdown,
        )

    if beta0 == 0.0:
        history.append((0, 0.0, "converged"))
        return x, _finish(True, 0.0)
    target = cfg.rtol * beta0
    rnorm = beta0

    def _try_converge():
        ok, r_true, tnorm = _verify_true_residual(op, b, x, beta0, target)
        if ok:
            history.append((counters.matvecs - mv0, tnorm / beta0, "converged"))
            return True, r_true, tnorm
        return False, r_true, tnorm

    if initial_project is not None:
        x, r, rnorm = initial_project(x, r)
        history.append((counters.matvecs - mv0, rnorm / beta0, "projection"))
        if rnorm <= target:
            ok, r, rnorm = _try_converge()
            if ok:
                return x, _finish(True, rnorm / beta0)

    cycle_index = 1
    breakdown = False
    while counters.matvecs - mv0 < cfg.max_matvecs:
        if project is not None and (fires is None or fires(cycle_index)):
            x, r, rnorm = project(x, r)
            history.append((counters.matvecs - mv0, rnorm / beta0, "projection"))
            if rnorm <= target:
                ok, r, rnorm = _try_converge()
                if ok:
                    return x, _finish(True, rnorm / beta0)
        budget_left = cfg.max_matvecs - (counters.matvecs - mv0)
        res = cycle_fn(x, r, budget_left, target)
        x, r, rnorm = res.x, res.r, res.rnorm
        history.append((counters.matvecs - mv0, rnorm / beta0, "cycle"))
        cycle_index += 1
        if rnorm <= target:
            ok, r, rnorm = _try_converge()
            if ok:
                return x, _finish(True, rnorm / beta0, breakdown=res.fact.breakdown)
        if res.fact.breakdown:
            breakdown = True
            break
        if res.steps == 0:
            break
    _, _, tnorm = _verify_true_residual(op, b, x, beta0, target)
    return x, _finish(tnorm <= target, tnorm / beta0, breakdown=breakdown)


def gmres_restarted(a, b, x0=None, cfg=None):
    """Restarted GMRES(cfg.m).  Returns ``(x, SolveReport)``.

    Budget exhaustion reports ``converged=False`` without raising.
    """
    op = as_operator(a)

    def cycle_fn(x, r, budget_left, target):
        return _run_cycle(op, x, r, cfg.m, stop_norm=target, budget=budget_left)

    return _restarted_driver(op, b, x0, cfg, cycle_fn)


def full_gmres(a, b, x0=None, rtol=1e-6, max_matvecs=1000):
    """Non-restarted GMRES: one growing cycle of up to ``max_matvecs`` steps."""
    cfg = SolveConfig(m=max_matvecs, rtol=rtol, max_matvecs=max_matvecs)
    return gmres_restarted(a, b, x0, cfg)


def _orthonormalize_block(y):
    """Orthonormalize the columns of y among themselves, dropping dependents."""
    cols = []
    for j in range(y.shape[1]):
        v_orth, _, new_norm = orthonormalize_against(
            y[:, j], cols if cols else np.zeros((y.shape[0], 0))
        )
        base = float(np.linalg.norm(y[:, j]))
        if base == 0.0 or new_norm <= 1e-12 * base:
            warnings.warn(f"dropping dependent augmentation vector {j}")
            continue
        cols.append(v_orth)
    if not cols:
        return np.zeros((y.shape[0], 0), dtype=np.complex128)
    return np.asfortranarray(np.column_stack(cols))


def _e_cycle(op, x, r, m, y_orth, stop_norm, budget):
    """One eigenvector-augmented cycle: Krylov(m - k) from r plus the fixed
    vectors, minimum residual over the combined span.

    The Krylov phase stops early on the coefficient-space estimate, in which
    case augmentation is skipped (the solution is already good enough).
    Augmentation vectors that collapse onto the Krylov basis are dropped with
    a warning.  Costs m matvecs for a full cycle: m - k Arnoldi steps plus
    one image per augmentation vector.
    """
    counters = op.counters
    k = y_orth.shape[1]
    mk = m - k
    res = _run_cycle(op, x, r, mk, stop_norm=stop_norm, budget=budget)
    allowed = mk if budget is None else min(mk, budget)
    if res.rnorm <= stop_norm or res.fact.breakdown or res.steps < allowed:
        return res
    fact = res.fact
    size, vcols = fact.size, fact.vcols
    v = fact.v
    # Orthonormalize the fixed vectors against the Krylov basis.
    aug = []
    images = []
    for j in range(k):
        if budget is not None and res.steps + len(images) >= budget:
            break
        basis = np.asfortranarray(
            np.column_stack([v[:, :size]] + aug) if aug else v[:, :size]
        )
        y_t, _, new_norm = orthonormalize_against(y_orth[:, j], basis)
        counters.add_vecops(4 * basis.shape[1] + 3)
        if new_norm <= 1e-12:
            warnings.warn(f"augmentation vector {j} lies in the Krylov space; dropped")
            continue
        aug.append(y_t)
        images.append(op.apply(y_t))
    if not aug:
        return res
    x0, r0 = x, r
    w_cols = [v[:, :size]] + aug
    c_block = np.column_stack(
        [v[:, :vcols] @ fact.h[:vcols, :size]] + images
    )
    counters.add_vecops(size * vcols)
    q_cols = []
    nc = c_block.shape[1]
    rmat = np.zeros((nc, nc), dtype=np.complex128)
    kept = []
    for j in range(nc):
        basis = (
            np.asfortranarray(np.column_stack(q_cols))
            if q_cols
            else np.zeros((op.dim, 0))
        )
        u, coeffs, new_norm = orthonormalize_against(c_block[:, j], basis)
        counters.add_vecops(4 * basis.shape[1] + 3)
        rmat[: len(q_cols), j] = coeffs
        if new_norm <= 1e-12 * float(np.linalg.norm(c_block[:, j])):
            continue
        rmat[len(q_cols), j] = new_norm
        q_cols.append(u)
        kept.append(j)
    u_mat = np.column_stack(q_cols)
    coef = u_mat.conj().T @ r0
    counters.add_vecops(len(q_cols))
    d = np.zeros(nc, dtype=np.complex128)
    for pos in range(len(kept) - 1, -1, -1):
        j = kept[pos]
        s = coef[pos] - rmat[pos, j + 1 :] @ d[j + 1 :]
        d[j] = s / rmat[pos, j]
    x_new = x0 + w_cols[0] @ d[:size]
    for i, yv in enumerate(aug):
        x_new = x_new + d[size + i] * yv
    counters.add_vecops(size + len(aug))
    r_new = r0 - u_mat @ coef
    counters.add_vecops(len(q_cols))
    rnorm = float(np.linalg.norm(r_new))
    return _CycleResult(x_new, r_new, rnorm, fact, res.chat, d,
                        res.steps + len(images))


def gmres_e_cycle(a, x0, r0, m, y):
    """One GMRES-E cycle: minimum residual over x0 + span{Krylov(m-k, r0), Y}.

    ``y`` holds k < m fixed approximate eigenvectors as columns.  With k = 0
    this is exactly :func:`gmres_cycle`.  Returns ``(x_new, r_new)``.
    """
    op = as_operator(a)
    y = np.asarray(y, dtype=np.complex128)
    if y.ndim == 1:
        y = y[:, None]
    k = y.shape[1]
    if k == 0:
        x_new, r_new, _, _ = gmres_cycle(op, x0, r0, m)
        return x_new, r_new
    if k >= m:
        raise ValueError("need k < m augmentation vectors")
    y_orth = _orthonormalize_block(y)
    res = _e_cycle(op, np.asarray(x0, dtype=np.complex128),
                   np.asarray(r0, dtype=np.complex128), m, y_orth,
                   stop_norm=0.0, budget=None)
    return res.x, res.r


def gmres_e_restarted(a, b, y, x0=None, cfg=None):
    """Restarted GMRES-E with fixed augmentation vectors.

    ``cfg.m`` is the total per-cycle subspace dimension (Krylov part
    ``m - k``).  With an empty ``y`` this is bitwise :func:`gmres_restarted`.
    """
    op = as_operator(a)
    y = np.asarray(y, dtype=np.complex128)
    if y.ndim == 1:
        y = y[:, None]
    if y.shape[1] == 0:
        return gmres_restarted(op, b, x0, cfg)
    if y.shape[1] >= cfg.m:
        raise ValueError("need k < m augmentation vectors")
    y_orth = _orthonormalize_block(y)

    def cycle_fn(x, r, budget_left, target):
        return _e_cycle(op, x, r, cfg.m, y_orth, stop_norm=target,
                        budget=budget_left)

    return _restarted_driver(op, b, x0, cfg, cycle_fn)


BICGSTAB_BREAKDOWN_TOL = 1e-30


def bicgstab(a, b, x0=None, rtol=1e-6, max_matvecs=10_000):
    """Textbook BiCGStab, two matvecs per iteration, with the half-step
    convergence check.  Breakdown (|rho| or |omega| below 1e-30) reports
    ``converged=False`` with the breakdown flag set.
    """
    op = as_operator(a)
    counters = op.counters
    mv0, vo0 = counters.snapshot()
    b = np.asarray(b, dtype=np.complex128)
    if x0 is None:
        x = np.zeros(op.dim, dtype=np.complex128)
        r = b.copy()
    else:
        x = np.asarray(x0, dtype=np.complex128).copy()
        r = b - op.apply(x) if np.any(x != 0.0) else b.copy()
    beta0 = float(np.linalg.norm(r))
    history = []

    def _finish(converged, final_rel, breakdown=False):
        return x, SolveReport(
            converged=converged,
            final_relative_residual=final_rel,
            matvecs=counters.matvecs - mv0,
            vecops=counters.vecops - vo0,
            residual_history=history,
            breakdown=breakdown,
        )

    if beta0 == 0.0:
        history.append((0, 0.0, "converged"))
        return _finish(True, 0.0)
    target = rtol * beta0
    r_hat = r.copy()
    rho_prev = 1.0 + 0.0j
    alpha = 1.0 + 0.0j
    omega = 1.0 + 0.0j
    v = np.zeros_like(r)
    p = np.zeros_like(r)
    breakdown = False
    first = True
    while counters.matvecs - mv0 < max_matvecs:
        rho = np.vdot(r_hat, r)
        counters.add_vecops(1)
        if abs(rho) < BICGSTAB_BREAKDOWN_TOL:
            breakdown = True
            break
        if first:
            p = r.copy()
            first = False
        else:
            beta = (rho / rho_prev) * (alpha / omega)
            p = r + beta * (p - omega * v)
            counters.add_vecops(2)
        v = op.apply(p)
        denom = np.vdot(r_hat, v)
        counters.add_vecops(1)
        if abs(denom) < BICGSTAB_BREAKDOWN_TOL:
            breakdown = True
            break
        alpha = rho / denom
        s = r - alpha * v
        counters.add_vecops(1)
        snorm = float(np.linalg.norm(s))
        counters.add_vecops(1)
        half_done = False
        if snorm <= target:
            x = x + alpha * p
            counters.add_vecops(1)
            r = s
            history.append((counters.matvecs - mv0, snorm / beta0, "cycle"))
            ok, _, tnorm = _verify_true_residual(op, b, x, beta0, target)
            if ok:
                history.append((counters.matvecs - mv0, tnorm / beta0, "converged"))
                return _finish(True, tnorm / beta0)
            half_done = True
        t = op.apply(s)
        tt = np.real(np.vdot(t, t))
        ts = np.vdot(t, s)
        counters.add_vecops(2)
        if tt == 0.0:
            breakdown = True
            break
        omega = ts / tt
        if abs(omega) < BICGSTAB_BREAKDOWN_TOL:
            breakdown = True
            break
        if half_done:
            x = x + omega * s
            counters.add_vecops(1)
        else:
            x = x + alpha * p + omega * s
            counters.add_vecops(2)
        r = s - omega * t
        counters.add_vecops(1)
        rho_prev = rho
        rnorm = float(np.linalg.norm(r))
        counters.add_vecops(1)
        history.append((counters.matvecs - mv0, rnorm / beta0, "cycle"))
        if rnorm <= target:
            ok, _, tnorm = _verify_true_residual(op, b, x, beta0, target)
            if ok:
                history.append((counters.matvecs - mv0, tnorm / beta0, "converged"))
                return _finish(True, tnorm / beta0)
    _, _, tnorm = _verify_true_residual(op, b, x, beta0, target)
    return _finish(tnorm <= target, tnorm / beta0, breakdown=breakdown)
