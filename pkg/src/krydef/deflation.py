"""Deflated restarted GMRES: harmonic Ritz extraction, the deflated restart,
the solver driver, and the two minimum-residual projections.

The deflated solver (``gmres_dr_solve``, cycle size m with k kept
eigenvector approximations) runs one plain GMRES(m) cycle, then repeatedly:
extracts the k smallest harmonic Ritz pairs from the reduced matrix, rebuilds
an orthonormal (k+1)-column basis spanning those vectors plus the current
residual direction entirely in coefficient space, and extends it by m - k
Arnoldi steps, minimizing the residual over the full m-dimensional augmented
space each cycle.  Matvec count: m for the first cycle, m - k per cycle
thereafter.

The reusable product is a :class:`DeflationSubspace` (V, H) with
``A V[:, :k] = V H`` — enough to apply the compact projection to later
right-hand sides without storing images of A.  It serializes to an ``.npz``
container (see :meth:`DeflationSubspace.save`).
"""

import warnings
from dataclasses import dataclass, field

import numpy as np

from .errors import RankDeficiencyError, SingularMatrixError
from .numkernel import (
    least_squares,
    lu_factor,
    lu_solve,
    orthonormal_columns,
    small_dense_eig,
    small_dense_solve,
)
from .krylov import SolveReport, _restarted_driver, _run_cycle
from .operators import as_operator

__all__ = [
    "DeflationSubspace",
    "HarmonicRitzPair",
    "harmonic_ritz",
    "gmresdr_restart",
    "gmres_dr_solve",
    "minres_project_general",
    "minres_project_compact",
]

SERIAL_FORMAT_VERSION = 1


@dataclass
class DeflationSubspace:
    """Orthonormal V (n x (k+1)) and H ((k+1) x k) with A V[:, :k] = V H.

    Columns of ``V[:, :k]`` span the kept harmonic Ritz vectors; ``thetas``
    records their harmonic Ritz values (ascending modulus).  Immutable once
    returned from a solve; safe to share across concurrent projected solves.
    """

    v: np.ndarray
    h: np.ndarray
    k: int
    thetas: np.ndarray = field(default_factory=lambda: np.zeros(0, np.complex128))

    @property
    def n(self):
        return self.v.shape[0]

    @classmethod
    def empty(cls, r0):
        """A k = 0 subspace carrying only the residual direction."""
        r0 = np.asarray(r0, dtype=np.complex128)
        beta = np.linalg.norm(r0)
        col = r0[:, None] / beta if beta > 0 else np.zeros((r0.shape[0], 1))
        return cls(
            v=np.asfortranarray(col),
            h=np.zeros((1, 0), dtype=np.complex128),
            k=0,
        )

    def save(self, path):
        """Write an .npz container: format_version, n, k, v (column-major), h, thetas."""
        np.savez(
            path,
            format_version=np.int64(SERIAL_FORMAT_VERSION),
            n=np.int64(self.n),
            k=np.int64(self.k),
            v=np.asfortranarray(self.v),
            h=np.ascontiguousarray(self.h),
            thetas=np.asarray(self.thetas, dtype=np.complex128),
        )

    @classmethod
    def load(cls, path):
        with np.load(path) as payload:
            version = int(payload["format_version"])
            if version != SERIAL_FORMAT_VERSION:
                raise ValueError(f"unsupported container version {version}")
            n = int(payload["n"])
            k = int(payload["k"])
            v = np.asfortranarray(payload["v"].astype(np.complex128))
            h = payload["h"].astype(np.complex128)
            thetas = payload["thetas"].astype(np.complex128)
        if v.shape != (n, k + 1) or h.shape != (k + 1, k):
            raise ValueError("container shapes inconsistent with n, k")
        return cls(v=v, h=h, k=k, thetas=thetas)


@dataclass
class HarmonicRitzPair:
    """Harmonic Ritz value with its coefficient vector; the length-n vector is
    materialized on demand from the basis that produced it."""

    theta: complex
    g: np.ndarray
    _basis: np.ndarray = None

    @property
    def y(self):
        if self._basis is None:
            raise ValueError("pair has no attached basis")
        return self._basis @ self.g


def _harmonic_coefficient_pairs(h, size, rows):
    """Harmonic Ritz pairs of the reduced matrix ``h[:rows, :size]``.

    Eigenpairs of  H_s + H_s^{-H} (B^H B)  with H_s the square part and B the
    bottom ``rows - size`` rows; for a plain Arnoldi factorization B is
    ``h_{m+1,m} e_m^T`` and this reduces to the familiar rank-one correction
    ``H + h^2 H^{-H} e_m e_m^H``.  Returns ``(thetas, gmat)`` sorted by
    ascending |theta| (stable; ties by real then imaginary part).

    Raises :class:`SingularMatrixError` when the square part is singular.
    """
    hs = np.ascontiguousarray(h[:size, :size])
    bottom = np.ascontiguousarray(h[size:rows, :size])
    mat = hs.copy()
    if bottom.shape[0]:
        try:
            lu, perm = lu_factor(hs.conj().T)
        except SingularMatrixError:
            raise SingularMatrixError(
                "square part of the reduced matrix is singular; "
                "harmonic Ritz extraction impossible"
            ) from None
        correction = lu_solve(lu, perm, bottom.conj().T @ bottom)
        mat += correction
    thetas, gmat = small_dense_eig(mat)
    order = np.lexsort((thetas.imag, thetas.real, np.abs(thetas)))
    return thetas[order], gmat[:, order]


def harmonic_ritz(fact):
    """Harmonic Ritz pairs of a factorization, sorted by ascending |theta|.

    All ``size`` pairs are returned; their residuals ``A y - theta y`` are
    collinear by construction (they all point along the part of the space
    outside the candidate span).
    """
    thetas, gmat = _harmonic_coefficient_pairs(fact.h, fact.size, fact.vcols)
    basis = fact.v[:, : fact.size]
    return [
        HarmonicRitzPair(theta=thetas[i], g=gmat[:, i].copy(), _basis=basis)
        for i in range(thetas.shape[0])
    ]


_CONJ_PAIR_RTOL = 1e-8


def _select_deflation_count(thetas, k, size):
    """Clamp k to what the cycle supports and avoid splitting a conjugate pair."""
    k_eff = min(k, size - 1)
    if k_eff < k:
        warnings.warn(
            f"only {size} harmonic pairs available; reducing deflation count to {k_eff}"
        )
    if 0 < k_eff < size:
        a, b = thetas[k_eff - 1], thetas[k_eff]
        scale = max(abs(a), abs(b), 1e-300)
        if (
            abs(a.imag) > _CONJ_PAIR_RTOL * scale
            and abs(b - np.conj(a)) <= _CONJ_PAIR_RTOL * scale
        ):
            if k_eff + 1 <= size - 1:
                k_eff += 1
            else:
                k_eff -= 1
    return k_eff


def _deflated_restart(v, h, size, vcols, chat, k):
    """Coefficient-space restart: returns (v_new, h_new, c_new, thetas, k_eff).

    ``P = qr([g_1 .. g_k (zero-padded), chat])``; then ``V_new = V P``,
    ``H_new = P^H (H P[: size, :k])`` and ``c_new = P^H chat`` — exact because
    every harmonic residual lies in span{g_i, chat}.
    """
    thetas, gmat = _harmonic_coefficient_pairs(h, size, vcols)
    k_eff = _select_deflation_count(thetas, k, size)
    if k_eff < 1:
        raise RankDeficiencyError("no harmonic pairs to keep")
    pmat = np.zeros((vcols, k_eff + 1), dtype=np.complex128)
    pmat[:size, :k_eff] = gmat[:, :k_eff]
    pmat[:, k_eff] = chat[:vcols]
    qmat, kept = orthonormal_columns(pmat)
    if len(kept) < k_eff + 1:
        dropped = sorted(set(range(k_eff + 1)) - set(kept))
        if k_eff in dropped:
            raise RankDeficiencyError(
                "residual direction dependent on harmonic vectors at restart"
            )
        warnings.warn(
            f"rank loss at restart: dropping harmonic columns {dropped}"
        )
        keep_g = [j for j in kept if j < k_eff]
        pmat = np.column_stack([pmat[:, keep_g], pmat[:, k_eff]])
        qmat, kept2 = orthonormal_columns(pmat)
        if len(kept2) < pmat.shape[1]:
            raise RankDeficiencyError("restart basis still rank deficient")
        k_eff = len(keep_g)
        idx = np.asarray(keep_g, dtype=int)
    else:
        idx = np.arange(k_eff)
    v_new = np.asfortranarray(v[:, :vcols] @ qmat)
    h_new = qmat.conj().T @ (h[:vcols, :size] @ qmat[:size, :k_eff])
    c_new = qmat.conj().T @ chat[:vcols]
    return v_new, h_new, c_new, thetas[idx], k_eff


def gmresdr_restart(fact, k, short_residual):
    """Build the deflated subspace from a just-completed cycle.

    ``short_residual`` is ``c - H d`` from that cycle's least-squares solve
    (length ``fact.vcols``).  The result's first k columns span the kept
    harmonic Ritz vectors; the extra column completes the span of the current
    linear-system residual.
    """
    short_residual = np.asarray(short_residual, dtype=np.complex128)
    v_new, h_new, c_new, thetas, k_eff = _deflated_restart(
        fact.v, fact.h, fact.size, fact.vcols, short_residual, k
    )
    return DeflationSubspace(v=v_new, h=h_new, k=k_eff, thetas=thetas)


def gmres_dr_solve(a, b, x0=None, cfg=None):
    """Deflated restarted GMRES(m, k) for the first right-hand side.

    Returns ``(x, SolveReport, DeflationSubspace)``; the subspace reflects the
    final cycle and is returned even on budget exhaustion.  Matvec count is
    ``m + (cycles - 1) (m - k)`` up to early termination inside the final
    cycle.
    """
    if cfg.k >= cfg.m:
        raise ValueError("need k < m")
    op = as_operator(a)
    counters = op.counters
    state = {"seed": None, "dsub": None}

    def cycle_fn(x, r, budget_left, target):
        if state["seed"] is None:
            res = _run_cycle(op, x, r, cfg.m, stop_norm=target, budget=budget_left)
        else:
            v_s, h_s = state["seed"]
            c_s = v_s.conj().T @ r
            counters.add_vecops(v_s.shape[1])
            res = _run_cycle(op, x, r, cfg.m, seed=(v_s, h_s, c_s),
                             stop_norm=target, budget=budget_left)
        fact = res.fact
        if fact.size > 1 and not fact.breakdown:
            try:
                v_new, h_new, c_new, thetas, k_eff = _deflated_restart(
                    fact.v, fact.h, fact.size, fact.vcols, res.chat, cfg.k
                )
            except (RankDeficiencyError, SingularMatrixError) as exc:
                warnings.warn(f"deflated restart failed ({exc}); plain restart")
                state["seed"] = None
            else:
                counters.add_vecops((k_eff + 1) * fact.vcols)
                state["seed"] = (v_new, h_new)
                state["dsub"] = DeflationSubspace(
                    v=v_new, h=h_new, k=k_eff, thetas=thetas
                )
        return res

    x, report = _restarted_driver(op, b, x0, cfg, cycle_fn)
    dsub = state["dsub"]
    if dsub is None:
        r_final = np.asarray(b, dtype=np.complex128) - op.apply_uncounted(x)
        dsub = DeflationSubspace.empty(r_final)
    return x, report, dsub


def minres_project_general(a, v, x0, r0):
    """Minimum-residual projection of the system onto span(V) columns.

    Solves ``(AV)^H (AV) d = (AV)^H r0`` (one matvec per column of V), updates
    ``x`` and ``r``.  A rank-deficient image falls back to a least-squares
    solve over the image's orthonormalized columns, with a warning.
    """
    op = as_operator(a)
    counters = op.counters
    v = np.asarray(v, dtype=np.complex128)
    if v.ndim == 1:
        v = v[:, None]
    q = v.shape[1]
    x0 = np.asarray(x0, dtype=np.complex128)
    r0 = np.asarray(r0, dtype=np.complex128)
    if q == 0:
        return x0.copy(), r0.copy()
    av = np.column_stack([op.apply(v[:, j]) for j in range(q)])
    gram = av.conj().T @ av
    rhs = av.conj().T @ r0
    counters.add_vecops(q * q + q)
    try:
        d = small_dense_solve(gram, rhs)
    except SingularMatrixError:
        warnings.warn("A V is rank deficient; least-squares projection instead")
        u_mat, kept = orthonormal_columns(av)
        coef = u_mat.conj().T @ r0
        r_new = r0 - u_mat @ coef
        counters.add_vecops(2 * len(kept))
        # Express the update in V coordinates through the kept columns only.
        rmat = u_mat.conj().T @ av[:, kept]
        d = np.zeros(q, dtype=np.complex128)
        d[np.asarray(kept, dtype=int)] = small_dense_solve(rmat, coef)
        x_new = x0 + v @ d
        counters.add_vecops(q)
        return x_new, r_new
    x_new = x0 + v @ d
    r_new = r0 - av @ d
    counters.add_vecops(2 * q)
    return x_new, r_new


def minres_project_compact(d, x0, r0, counters=None):
    """Minimum-residual projection over the deflation subspace, zero matvecs.

    ``c = V^H r0`` (k+1 dots), a (k+1) x k least squares, then k updates to x
    and k+1 to r: exactly 3k+2 length-n vector operations, counted on
    ``counters`` when given.
    """
    x0 = np.asarray(x0, dtype=np.complex128)
    r0 = np.asarray(r0, dtype=np.complex128)
    k = d.k
    c = d.v.conj().T @ r0
    if k == 0:
        if counters is not None:
            counters.add_vecops(2)
        return x0.copy(), r0.copy()
    coef, _ = least_squares(d.h, c)
    x_new = x0 + d.v[:, :k] @ coef
    r_new = r0 - d.v @ (d.h @ coef)
    if counters is not None:
        counters.add_vecops(3 * k + 2)
    return x_new, r_new
