"""Pure numpy versions of the compiled kernels in ``_kernels.pyx``.

Same signatures and convergence semantics, so either backend can be swapped in.
"""
import numpy as np
import scipy.sparse as sp


def _as_csr(indptr, indices, data):
    n = indptr.shape[0] - 1
    return sp.csr_matrix((data, indices, indptr), shape=(n, n))


def csr_matvec(indptr, indices, data, x, shift, out):
    out[:] = _as_csr(indptr, indices, data) @ x + shift * x


def pcg(indptr, indices, data, diag, shift, b, x, tol, max_iter, work):
    A = _as_csr(indptr, indices, data)
    bnorm = np.linalg.norm(b)
    if bnorm == 0.0:
        x[:] = 0.0
        return 0, 0.0
    minv = 1.0 / (diag + shift)
    r = b - (A @ x + shift * x)
    rnorm = np.linalg.norm(r)
    z = minv * r
    p = z.copy()
    rz = r @ z
    it = 0
    while rnorm > tol * bnorm and it < max_iter:
        q = A @ p + shift * p
        alpha = rz / (p @ q)
        x += alpha * p
        r -= alpha * q
        rnorm = np.linalg.norm(r)
        z = minv * r
        rz_new = r @ z
        p = z + (rz_new / rz) * p
        rz = rz_new
        it += 1
    return it, rnorm / bnorm


def stencil_matvec(ce, cn, inv_h2, x, shift, out):
    c = x[1:-1, 1:-1]
    out[1:-1, 1:-1] = shift * c + inv_h2 * (
        ce[1:-1, 1:-1] * (c - x[2:, 1:-1])
        + ce[:-2, 1:-1] * (c - x[:-2, 1:-1])
        + cn[1:-1, 1:-1] * (c - x[1:-1, 2:])
        + cn[1:-1, :-2] * (c - x[1:-1, :-2])
    )


def pcg_stencil(ce, cn, inv_h2, diag, shift, b, x, tol, max_iter, work):
    inner = (slice(1, -1), slice(1, -1))
    bnorm = np.linalg.norm(b[inner])
    if bnorm == 0.0:
        x[:] = 0.0
        return 0, 0.0
    r, z, p, q = work[:4]
    work[:] = 0.0
    minv = 1.0 / (diag[inner] + shift)
    stencil_matvec(ce, cn, inv_h2, x, shift, q)
    r[inner] = b[inner] - q[inner]
    rnorm = np.linalg.norm(r[inner])
    z[inner] = minv * r[inner]
    p[inner] = z[inner]
    rz = np.vdot(r[inner], z[inner])
    it = 0
    while rnorm > tol * bnorm and it < max_iter:
        stencil_matvec(ce, cn, inv_h2, p, shift, q)
        alpha = rz / np.vdot(p[inner], q[inner])
        x[inner] += alpha * p[inner]
        r[inner] -= alpha * q[inner]
        rnorm = np.linalg.norm(r[inner])
        z[inner] = minv * r[inner]
        rz_new = np.vdot(r[inner], z[inner])
        p[inner] = z[inner] + (rz_new / rz) * p[inner]
        rz = rz_new
        it += 1
    return it, rnorm / bnorm
