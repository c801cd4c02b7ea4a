# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled hot loops: CSR mat-vec and Jacobi-preconditioned CG with a diagonal shift."""

from libc.math cimport sqrt


def csr_matvec(const long[::1] indptr, const long[::1] indices, const double[::1] data,
               const double[::1] x, double shift, double[::1] out):
    """out = (A + shift I) x"""
    cdef Py_ssize_t n = indptr.shape[0] - 1
    cdef Py_ssize_t i, k
    cdef double acc
    with nogil:
        for i in range(n):
            acc = shift * x[i]
            for k in range(indptr[i], indptr[i + 1]):
                acc = acc + data[k] * x[indices[k]]
            out[i] = acc


def pcg(const long[::1] indptr, const long[::1] indices, const double[::1] data,
        const double[::1] diag, double shift, const double[::1] b, double[::1] x,
        double tol, long max_iter, double[:, ::1] work):
    """Solve (A + shift I) x = b in place; ``x`` holds the initial guess.

    ``work`` is a (4, n) scratch array. Returns (iterations, relative residual).
    Convergence: ||b - (A + shift I) x|| <= tol * ||b||.
    """
    cdef Py_ssize_t n = b.shape[0]
    cdef Py_ssize_t i, k
    cdef long it = 0
    cdef double[::1] r = work[0]
    cdef double[::1] z = work[1]
    cdef double[::1] p = work[2]
    cdef double[::1] q = work[3]
    cdef double bnorm = 0.0, rnorm = 0.0, rz = 0.0, rz_new, pq, alpha, beta, acc, thresh

    for i in range(n):
        bnorm += b[i] * b[i]
    bnorm = sqrt(bnorm)
    if bnorm == 0.0:
        for i in range(n):
            x[i] = 0.0
        return 0, 0.0
    thresh = tol * bnorm

    with nogil:

        for i in range(n):
            acc = shift * x[i]
            for k in range(indptr[i], indptr[i + 1]):
                acc = acc + data[k] * x[indices[k]]
            r[i] = b[i] - acc
            rnorm += r[i] * r[i]
        rnorm = sqrt(rnorm)

        for i in range(n):
            z[i] = r[i] / (diag[i] + shift)
            p[i] = z[i]
            rz += r[i] * z[i]

        while rnorm > thresh and it < max_iter:
            pq = 0.0
            for i in range(n):
                acc = shift * p[i]
                for k in range(indptr[i], indptr[i + 1]):
                    acc = acc + data[k] * p[indices[k]]
                q[i] = acc
                pq += p[i] * acc
            alpha = rz / pq
            rnorm = 0.0
            rz_new = 0.0
            for i in range(n):
                x[i] += alpha * p[i]
                r[i] -= alpha * q[i]
                rnorm += r[i] * r[i]
                z[i] = r[i] / (diag[i] + shift)
                rz_new += r[i] * z[i]
            rnorm = sqrt(rnorm)
            beta = rz_new / rz
            rz = rz_new
            for i in range(n):
                p[i] = z[i] + beta * p[i]
            it += 1

    return it, rnorm / bnorm


cdef inline double _stencil(const double* ce, const double* cn, const double* x, Py_ssize_t k,
                            Py_ssize_t w, double inv_h2, double shift) noexcept nogil:
    # k = i * w + j on a row-major padded grid of width w
    cdef double xc = x[k]
    return shift * xc + inv_h2 * (ce[k] * (xc - x[k + w]) + ce[k - w] * (xc - x[k - w])
                                  + cn[k] * (xc - x[k + 1]) + cn[k - 1] * (xc - x[k - 1]))


def stencil_matvec(const double[:, ::1] ce, const double[:, ::1] cn, double inv_h2,
                   const double[:, ::1] x, double shift, double[:, ::1] out):
    """Padded-grid five-point operator; ``ce``/``cn`` are east/north face conductances."""
    cdef Py_ssize_t w = x.shape[1], m = x.shape[0] - 1, i, j, k
    cdef const double* pce = &ce[0, 0]
    cdef const double* pcn = &cn[0, 0]
    cdef const double* px = &x[0, 0]
    with nogil:
        for i in range(1, m):
            for j in range(1, w - 1):
                k = i * w + j
                out[i, j] = _stencil(pce, pcn, px, k, w, inv_h2, shift)


def pcg_stencil(const double[:, ::1] ce, const double[:, ::1] cn, double inv_h2,
                const double[:, ::1] diag, double shift, const double[:, ::1] b, double[:, ::1] x,
                double tol, long max_iter, double[:, :, ::1] work):
    """Jacobi PCG on the padded grid; same contract as :func:`pcg`.

    Cells with zero conductance on all faces and zero load (cavity cells and
    the padding ring) stay at zero and drop out of every inner product.
    ``work`` has shape (5, n + 2, n + 2).
    """
    cdef Py_ssize_t w = b.shape[1], m = b.shape[0] - 1, i, j, k, size = b.shape[0] * b.shape[1]
    cdef long it = 0
    cdef const double* pce = &ce[0, 0]
    cdef const double* pcn = &cn[0, 0]
    cdef const double* pd = &diag[0, 0]
    cdef const double* pb = &b[0, 0]
    cdef double* px = &x[0, 0]
    cdef double* r = &work[0, 0, 0]
    cdef double* z = &work[1, 0, 0]
    cdef double* p = &work[2, 0, 0]
    cdef double* q = &work[3, 0, 0]
    cdef double* minv = &work[4, 0, 0]
    cdef double bnorm = 0.0, rnorm = 0.0, rz = 0.0, rz_new, pq, alpha, beta, acc, thresh

    with nogil:
        for k in range(size):
            minv[k] = 1.0 / (pd[k] + shift)
            r[k] = 0.0
            z[k] = 0.0
            p[k] = 0.0
            q[k] = 0.0
            bnorm += pb[k] * pb[k]
        bnorm = sqrt(bnorm)
    if bnorm == 0.0:
        x[:, :] = 0.0
        return 0, 0.0
    thresh = tol * bnorm

    with nogil:
        for i in range(1, m):
            for j in range(1, w - 1):
                k = i * w + j
                r[k] = pb[k] - _stencil(pce, pcn, px, k, w, inv_h2, shift)
                rnorm += r[k] * r[k]
                z[k] = r[k] * minv[k]
                p[k] = z[k]
                rz += r[k] * z[k]
        rnorm = sqrt(rnorm)

        while rnorm > thresh and it < max_iter:
            pq = 0.0
            for i in range(1, m):
                for j in range(1, w - 1):
                    k = i * w + j
                    acc = _stencil(pce, pcn, p, k, w, inv_h2, shift)
                    q[k] = acc
                    pq += p[k] * acc
            alpha = rz / pq
            rnorm = 0.0
            rz_new = 0.0
            for k in range(w, size - w):
                px[k] += alpha * p[k]
                r[k] -= alpha * q[k]
                rnorm += r[k] * r[k]
                z[k] = r[k] * minv[k]
                rz_new += r[k] * z[k]
            rnorm = sqrt(rnorm)
            beta = rz_new / rz
            rz = rz_new
            for k in range(w, size - w):
                p[k] = z[k] + beta * p[k]
            it += 1

    return it, rnorm / bnorm
