"""Dense coefficient-space kernels: least squares, orthonormalization,
a self-contained eigensolver, and pivoted solves.

Every solver in this package reduces its small dense work to the routines
here.  The eigensolver deliberately avoids LAPACK-style library calls: it is
Householder reduction to Hessenberg form followed by shifted QR iteration,
with eigenvectors recovered by back-substitution on the triangular factor.
Matrices are numpy ``complex128`` arrays indexed ``[row, col]``; bases whose
columns are problem-length vectors are kept Fortran-ordered so columns are
contiguous.

Tolerances (relative): rank/breakdown/pivot thresholds are ``1e-14``, near
machine precision and well below every solver tolerance used downstream.
"""

import numpy as np

from . import _kernels
from .errors import EigenConvergenceError, RankDeficiencyError, SingularMatrixError

RANK_TOL = 1e-14
BREAKDOWN_TOL = 1e-14
PIVOT_TOL = 1e-14

_EPS = float(np.finfo(np.float64).eps)


def _as_complex_matrix(m):
    a = np.asarray(m, dtype=np.complex128)
    if a.ndim != 2:
        raise ValueError("expected a 2-d array")
    return a


def _as_complex_vector(v):
    a = np.asarray(v, dtype=np.complex128)
    if a.ndim != 1:
        raise ValueError("expected a 1-d array")
    return a


class IncrementalQR:
    """Householder QR of a matrix whose columns arrive one at a time.

    Maintains the accumulated unitary reduction Q^H applied to every new
    column and to the right-hand side(s), so after ``j`` columns the
    least-squares residual norm of  min ||c - H[:, :j] d||  is the tail norm
    of the rotated right-hand side — the quantity restarted solvers poll
    after every Arnoldi step.  Columns may be longer than the current row
    count (rows added this way extend the right-hand side with zeros, which
    is exactly the Krylov case).
    """

    def __init__(self, rhs, row_capacity, col_capacity):
        rhs = np.asarray(rhs, dtype=np.complex128)
        self._vector_rhs = rhs.ndim == 1
        if self._vector_rhs:
            rhs = rhs[:, None]
        r0, nrhs = rhs.shape
        if r0 > row_capacity:
            raise ValueError("rhs longer than row capacity")
        self._qh = np.eye(row_capacity, dtype=np.complex128)
        self._r = np.zeros((row_capacity, col_capacity), dtype=np.complex128)
        self._rhs = np.zeros((row_capacity, nrhs), dtype=np.complex128)
        self._rhs[:r0] = rhs
        self.rows = r0
        self.cols = 0

    def append(self, col):
        """Add the next column; its length may exceed the current row count."""
        col = np.asarray(col, dtype=np.complex128)
        if col.shape[0] > self._qh.shape[0]:
            raise ValueError("column exceeds row capacity")
        if self.cols >= self._r.shape[1]:
            raise ValueError("column capacity exhausted")
        if col.shape[0] > self.rows:
            self.rows = col.shape[0]
        r, c = self.rows, self.cols
        if col.shape[0] < r:
            col = np.concatenate([col, np.zeros(r - col.shape[0], np.complex128)])
        v = self._qh[:r, :r] @ col
        x = v[c:r]
        xn = np.linalg.norm(x)
        if xn > 0.0 and x.shape[0] > 0:
            a0 = x[0]
            phase = a0 / abs(a0) if a0 != 0 else 1.0
            alpha = -phase * xn
            u = x.copy()
            u[0] -= alpha
            un2 = np.real(np.vdot(u, u))
            if un2 > 0.0:
                tau = 2.0 / un2
                rows = slice(c, r)
                self._qh[rows, :r] -= tau * np.outer(u, u.conj() @ self._qh[rows, :r])
                self._rhs[rows, :] -= tau * np.outer(u, u.conj() @ self._rhs[rows, :])
            self._r[c, c] = alpha
        else:
            self._r[c, c] = 0.0
        self._r[:c, c] = v[:c]
        self.cols += 1

    def diagonal(self):
        return np.abs(np.diag(self._r[: self.cols, : self.cols]))

    def residual_norms(self):
        """Least-squares residual norm(s) with the columns appended so far."""
        tail = self._rhs[self.cols : self.rows]
        norms = np.linalg.norm(tail, axis=0)
        return float(norms[0]) if self._vector_rhs else norms

    def solve(self):
        """Back-substitute for the least-squares coefficients."""
        c = self.cols
        rmat = self._r[:c, :c]
        rhs = self._rhs[:c]
        d = np.zeros((c, rhs.shape[1]), dtype=np.complex128)
        for i in range(c - 1, -1, -1):
            if rmat[i, i] == 0.0:
                raise RankDeficiencyError(f"zero R diagonal at column {i}")
            d[i] = (rhs[i] - rmat[i, i + 1 : c] @ d[i + 1 : c]) / rmat[i, i]
        return d[:, 0] if self._vector_rhs else d


def least_squares(h, c):
    """Minimize ||c - H d|| over d by Householder QR.

    Returns ``(d, resid_norm)``.  Raises :class:`RankDeficiencyError` when a
    column of H is dependent to within ``1e-14 * ||H||_F``.
    """
    h = _as_complex_matrix(h)
    c = _as_complex_vector(c)
    p, q = h.shape
    if c.shape[0] != p:
        raise ValueError("rhs length does not match row count")
    if p < q:
        raise ValueError("least_squares expects p >= q")
    if q == 0:
        return np.zeros(0, dtype=np.complex128), float(np.linalg.norm(c))
    hnorm = np.linalg.norm(h)
    qr = IncrementalQR(c, p, q)
    for j in range(q):
        qr.append(h[:, j])
    if np.any(qr.diagonal() <= RANK_TOL * hnorm):
        raise RankDeficiencyError(
            f"column norm below {RANK_TOL:g} * ||H|| after orthogonalization"
        )
    d = qr.solve()
    return d, qr.residual_norms()


def orthonormalize_against(v, basis):
    """Orthogonalize v against an orthonormal basis (two-pass MGS).

    ``basis`` is an (n, j) array or a sequence of length-n vectors.  Returns
    ``(v_orth, coeffs, new_norm)`` with  v = basis @ coeffs + new_norm * v_orth
    and ``v_orth`` of unit length.  A ``new_norm`` below ``1e-14 * ||v||``
    signals breakdown (v lies in the span); ``v_orth`` is then a zero vector
    and the caller decides what to do.
    """
    v = _as_complex_vector(v)
    if isinstance(basis, np.ndarray) and basis.ndim == 2:
        b = np.asfortranarray(basis, dtype=np.complex128)
    else:
        cols = [np.asarray(x, dtype=np.complex128) for x in basis]
        b = (
            np.asfortranarray(np.column_stack(cols))
            if cols
            else np.zeros((v.shape[0], 0), dtype=np.complex128)
        )
    ncols = b.shape[1]
    w = v.copy()
    coeffs = np.zeros(ncols, dtype=np.complex128)
    _kernels.mgs2(b, ncols, w, coeffs)
    new_norm = float(np.linalg.norm(w))
    vnorm = float(np.linalg.norm(v))
    if new_norm <= BREAKDOWN_TOL * vnorm or new_norm == 0.0:
        return np.zeros_like(w), coeffs, new_norm
    return w / new_norm, coeffs, new_norm


def orthonormal_columns(m, drop_tol=RANK_TOL):
    """Orthonormalize the columns of m left to right, dropping dependents.

    Returns ``(q, kept)`` where q has orthonormal columns spanning the kept
    columns of m, and ``kept`` lists the surviving column indices.
    """
    m = _as_complex_matrix(m)
    n, ncols = m.shape
    q = np.zeros((n, ncols), dtype=np.complex128, order="F")
    kept = []
    built = 0
    for j in range(ncols):
        colnorm = np.linalg.norm(m[:, j])
        v_orth, _, new_norm = orthonormalize_against(m[:, j], q[:, :built])
        if colnorm == 0.0 or new_norm <= drop_tol * colnorm:
            continue
        q[:, built] = v_orth
        kept.append(j)
        built += 1
    return np.asfortranarray(q[:, :built]), kept


def lu_factor(m, pivot_tol=PIVOT_TOL):
    """Partially pivoted LU in place; returns (lu, perm)."""
    a = _as_complex_matrix(m).copy()
    q = a.shape[0]
    if a.shape[1] != q:
        raise ValueError("square matrix required")
    scale = max(float(np.max(np.abs(a))), 1e-300)
    perm = np.arange(q)
    for col in range(q):
        piv = col + int(np.argmax(np.abs(a[col:, col])))
        if abs(a[piv, col]) <= pivot_tol * scale:
            raise SingularMatrixError(
                f"pivot below {pivot_tol:g} * ||M|| at column {col}"
            )
        if piv != col:
            a[[col, piv]] = a[[piv, col]]
            perm[[col, piv]] = perm[[piv, col]]
        a[col + 1 :, col] /= a[col, col]
        a[col + 1 :, col + 1 :] -= np.outer(a[col + 1 :, col], a[col, col + 1 :])
    return a, perm


def lu_solve(lu, perm, rhs):
    """Solve with a factorization from :func:`lu_factor`; rhs 1-d or 2-d."""
    b = np.asarray(rhs, dtype=np.complex128)
    vector = b.ndim == 1
    if vector:
        b = b[:, None]
    q = lu.shape[0]
    x = b[perm].copy()
    for i in range(1, q):
        x[i] -= lu[i, :i] @ x[:i]
    for i in range(q - 1, -1, -1):
        x[i] = (x[i] - lu[i, i + 1 :] @ x[i + 1 :]) / lu[i, i]
    return x[:, 0] if vector else x


def small_dense_solve(m, rhs):
    """Solve M x = rhs by partially pivoted LU.

    Raises :class:`SingularMatrixError` when a pivot falls below
    ``1e-14 * ||M||``.
    """
    lu, perm = lu_factor(m)
    return lu_solve(lu, perm, rhs)


def _hessenberg_reduce(a):
    q = a.shape[0]
    h = a.copy()
    z = np.eye(q, dtype=np.complex128)
    for c in range(q - 2):
        x = h[c + 1 :, c]
        xn = np.linalg.norm(x)
        if xn == 0.0:
            continue
        a0 = x[0]
        phase = a0 / abs(a0) if a0 != 0 else 1.0
        alpha = -phase * xn
        u = x.copy()
        u[0] -= alpha
        un2 = np.real(np.vdot(u, u))
        if un2 == 0.0:
            continue
        tau = 2.0 / un2
        h[c + 1 :, c:] -= tau * np.outer(u, u.conj() @ h[c + 1 :, c:])
        h[:, c + 1 :] -= tau * np.outer(h[:, c + 1 :] @ u, u.conj())
        z[:, c + 1 :] -= tau * np.outer(z[:, c + 1 :] @ u, u.conj())
        h[c + 2 :, c] = 0.0
    return h, z


MAX_QR_SWEEPS_PER_EIG = 40


def small_dense_eig(m):
    """All eigenpairs of a general complex square matrix (q up to a few hundred).

    Hessenberg reduction, shifted QR iteration to triangular (Schur) form,
    then eigenvectors by back-substitution.  Returns ``(values, vectors)``
    with vectors as unit-norm columns; every returned pair satisfies
    ``||M g - theta g|| <= 1e-8 ||M|| ||g||``.  Raises
    :class:`EigenConvergenceError` if the iteration has not deflated after
    ``40 * q`` sweeps.
    """
    a = _as_complex_matrix(m)
    q = a.shape[0]
    if a.shape[1] != q:
        raise ValueError("square matrix required")
    if q == 0:
        return np.zeros(0, np.complex128), np.zeros((0, 0), np.complex128)
    if q == 1:
        return a[0, 0] * np.ones(1), np.ones((1, 1), np.complex128)
    h, z = _hessenberg_reduce(a)
    left = _kernels.hessenberg_qr(h, z, MAX_QR_SWEEPS_PER_EIG * q)
    if left:
        raise EigenConvergenceError(
            f"{left} eigenvalue(s) undeflated after {MAX_QR_SWEEPS_PER_EIG * q} sweeps"
        )
    values = np.diag(h).copy()
    guard = _EPS * max(float(np.linalg.norm(h)), 1e-300)
    coeff = _kernels.tri_eigvecs(np.triu(h), guard)
    vectors = z @ coeff
    vectors /= np.linalg.norm(vectors, axis=0)
    return values, vectors
