"""Hot numeric kernels, each with a numba-jitted and a pure-numpy implementation.

The numba path is used when numba imports cleanly, unless the environment
variable ``KRYDEF_NO_NUMBA`` is set to a truthy value (``1``/``true``/``yes``),
in which case the vectorized numpy fallbacks run instead.  ``set_backend``
switches at runtime; ``benchmarks/bench_kernels.py`` times one against the
other.

Kernels here are the only code paths that touch length-n data in tight loops:
CSR matrix-vector products, the two-pass modified Gram-Schmidt step used by
every Arnoldi variant, and the shifted-QR machinery of the dense eigensolver.
Both implementations of a kernel compute the same quantity; results agree to
floating-point roundoff, not bitwise.
"""

import os

import numpy as np

_EPS = float(np.finfo(np.float64).eps)


def _env_disabled():
    return os.environ.get("KRYDEF_NO_NUMBA", "").strip().lower() in (
        "1", "true", "yes", "on",
    )


try:
    if _env_disabled():
        raise ImportError("numba disabled via KRYDEF_NO_NUMBA")
    from numba import njit

    HAVE_NUMBA = True
except ImportError:
    njit = None
    HAVE_NUMBA = False

_active = "numba" if HAVE_NUMBA else "numpy"


def active_backend():
    """Name of the backend currently dispatched to: 'numba' or 'numpy'."""
    return _active


def set_backend(name):
    """Select 'numba' or 'numpy' at runtime (tests and benchmarks)."""
    global _active
    if name not in ("numba", "numpy"):
        raise ValueError(f"unknown backend {name!r}")
    if name == "numba" and not HAVE_NUMBA:
        raise RuntimeError("numba backend requested but numba is unavailable")
    _active = name


# ---------------------------------------------------------------------------
# CSR matrix-vector product
# ---------------------------------------------------------------------------

def _csr_matvec_np(indptr, indices, data, x, rows):
    if rows is None:
        n = indptr.shape[0] - 1
        rows = np.repeat(np.arange(n, dtype=np.int64), np.diff(indptr))
    n = indptr.shape[0] - 1
    prod = data * x[indices]
    y = np.bincount(rows, weights=prod.real, minlength=n).astype(np.complex128)
    y += 1j * np.bincount(rows, weights=prod.imag, minlength=n)
    return y


if HAVE_NUMBA:

    @njit(cache=True)
    def _csr_matvec_nb(indptr, indices, data, x):
        n = indptr.shape[0] - 1
        y = np.zeros(n, dtype=np.complex128)
        for i in range(n):
            acc = 0.0 + 0.0j
            for idx in range(indptr[i], indptr[i + 1]):
                acc += data[idx] * x[indices[idx]]
            y[i] = acc
        return y


def csr_matvec(indptr, indices, data, x, rows=None):
    """y = A x for a CSR matrix given by (indptr, indices, data)."""
    if _active == "numba":
        return _csr_matvec_nb(indptr, indices, data, x)
    return _csr_matvec_np(indptr, indices, data, x, rows)


# ---------------------------------------------------------------------------
# Modified Gram-Schmidt, two passes, against the leading columns of a basis
# ---------------------------------------------------------------------------

def _mgs2_np(v, ncols, w, coeffs):
    for _ in range(2):
        for c in range(ncols):
            s = np.vdot(v[:, c], w)
            coeffs[c] += s
            w -= s * v[:, c]


if HAVE_NUMBA:

    @njit(cache=True)
    def _mgs2_nb(v, ncols, w, coeffs):
        n = w.shape[0]
        for _ in range(2):
            for c in range(ncols):
                s = 0.0 + 0.0j
                for i in range(n):
                    s += np.conj(v[i, c]) * w[i]
                coeffs[c] += s
                for i in range(n):
                    w[i] -= s * v[i, c]


def mgs2(v, ncols, w, coeffs):
    """Orthogonalize w in place against columns v[:, :ncols], two sweeps.

    Projection coefficients are accumulated into ``coeffs`` (sum of both
    sweeps), so afterwards  w_in = v[:, :ncols] @ coeffs + w_out.
    """
    if _active == "numba":
        _mgs2_nb(v, ncols, w, coeffs)
    else:
        _mgs2_np(v, ncols, w, coeffs)


# ---------------------------------------------------------------------------
# Shifted QR iteration on an upper-Hessenberg matrix (Schur form), in place.
# h becomes upper triangular, z accumulates the unitary similarity.
# Returns 0 on success, or the number of eigenvalues left undeflated.
# ---------------------------------------------------------------------------

def _qr_py(h, z, max_iter):
    q = h.shape[0]
    fro = np.linalg.norm(h)
    floor = _EPS * fro + 1e-300
    hi = q - 1
    stall = 0
    total = 0
    while hi > 0:
        thresh = _EPS * (abs(h[hi - 1, hi - 1]) + abs(h[hi, hi])) + floor
        if abs(h[hi, hi - 1]) <= thresh:
            h[hi, hi - 1] = 0.0
            hi -= 1
            stall = 0
            continue
        lo = hi
        while lo > 0:
            t = _EPS * (abs(h[lo - 1, lo - 1]) + abs(h[lo, lo])) + floor
            if abs(h[lo, lo - 1]) <= t:
                h[lo, lo - 1] = 0.0
                break
            lo -= 1
        total += 1
        stall += 1
        if total > max_iter:
            return hi + 1
        if stall % 16 == 0:
            sigma = h[hi, hi] + 0.75 * abs(h[hi, hi - 1])
        else:
            a = h[hi - 1, hi - 1]
            b = h[hi - 1, hi]
            c2 = h[hi, hi - 1]
            d = h[hi, hi]
            tr = a + d
            disc = np.sqrt(0.25 * tr * tr - (a * d - b * c2))
            l1 = 0.5 * tr + disc
            l2 = 0.5 * tr - disc
            sigma = l1 if abs(l1 - d) <= abs(l2 - d) else l2
        for i in range(lo, hi + 1):
            h[i, i] -= sigma
        cs = np.empty(hi, dtype=np.float64)
        sn = np.empty(hi, dtype=np.complex128)
        for i in range(lo, hi):
            a = h[i, i]
            b = h[i + 1, i]
            if b == 0:
                c, s, r = 1.0, 0.0 + 0.0j, a
            elif a == 0:
                c, s, r = 0.0, np.conj(b) / abs(b), abs(b)
            else:
                aa = abs(a)
                d2 = np.hypot(aa, abs(b))
                c = aa / d2
                ph = a / aa
                s = ph * np.conj(b) / d2
                r = ph * d2
            cs[i], sn[i] = c, s
            h[i, i] = r
            h[i + 1, i] = 0.0
            t0 = c * h[i, i + 1:] + s * h[i + 1, i + 1:]
            h[i + 1, i + 1:] = -np.conj(s) * h[i, i + 1:] + c * h[i + 1, i + 1:]
            h[i, i + 1:] = t0
        for i in range(lo, hi):
            c, s = cs[i], sn[i]
            top = min(i + 1, hi) + 1
            t0 = c * h[:top, i] + np.conj(s) * h[:top, i + 1]
            h[:top, i + 1] = -s * h[:top, i] + c * h[:top, i + 1]
            h[:top, i] = t0
            t0 = c * z[:, i] + np.conj(s) * z[:, i + 1]
            z[:, i + 1] = -s * z[:, i] + c * z[:, i + 1]
            z[:, i] = t0
        for i in range(lo, hi + 1):
            h[i, i] += sigma
    return 0


if HAVE_NUMBA:
    _qr_nb = njit(cache=True)(_qr_py)


def hessenberg_qr(h, z, max_iter):
    """Reduce Hessenberg h to upper triangular in place; see module notes."""
    if _active == "numba":
        return _qr_nb(h, z, max_iter)
    return _qr_py(h, z, max_iter)


# ---------------------------------------------------------------------------
# Eigenvector columns of an upper triangular matrix by back-substitution
# ---------------------------------------------------------------------------

def _tri_vecs_np(t, guard):
    q = t.shape[0]
    g = np.zeros((q, q), dtype=np.complex128)
    for m in range(q):
        lam = t[m, m]
        g[m, m] = 1.0
        for i in range(m - 1, -1, -1):
            s = t[i, i + 1:m + 1] @ g[i + 1:m + 1, m]
            den = t[i, i] - lam
            if abs(den) < guard:
                den = guard
            g[i, m] = -s / den
    return g


if HAVE_NUMBA:

    @njit(cache=True)
    def _tri_vecs_nb(t, guard):
        q = t.shape[0]
        g = np.zeros((q, q), dtype=np.complex128)
        for m in range(q):
            lam = t[m, m]
            g[m, m] = 1.0
            for i in range(m - 1, -1, -1):
                s = 0.0 + 0.0j
                for j in range(i + 1, m + 1):
                    s += t[i, j] * g[j, m]
                den = t[i, i] - lam
                if abs(den) < guard:
                    den = guard
                g[i, m] = -s / den
        return g


def tri_eigvecs(t, guard):
    """Eigenvector coefficient columns of upper triangular t, guarded pivots."""
    if _active == "numba":
        return _tri_vecs_nb(t, guard)
    return _tri_vecs_np(t, guard)
