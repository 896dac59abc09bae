# cython: boundscheck=False, wraparound=False, cdivision=True, language_level=3
"""Compiled scaling kernels.

Mirrors `py.py`; the whole while-loop runs in C so per-iteration Python
overhead disappears, which matters when the solver is called thousands of
times on small matrices inside the training loop.
"""

import numpy as np

cimport numpy as cnp
from libc.math cimport exp, fabs, log, pow

cnp.import_array()

DEF KERNEL_FLOOR = 1e-300


def scaling_weighted_kl(
    cnp.ndarray[double, ndim=2] C,
    cnp.ndarray[double, ndim=1] alpha,
    cnp.ndarray[double, ndim=1] beta,
    cnp.ndarray[double, ndim=1] f,
    double epsilon,
    double tol,
    int max_iter,
    double threshold,
):
    cdef Py_ssize_t m = C.shape[0]
    cdef Py_ssize_t n = C.shape[1]
    cdef cnp.ndarray[double, ndim=2] M = np.empty((m, n))
    cdef cnp.ndarray[double, ndim=1] a = np.ones(m)
    cdef cnp.ndarray[double, ndim=1] b = np.ones(n)
    cdef cnp.ndarray[double, ndim=1] b_new = np.empty(n)
    cdef cnp.ndarray[double, ndim=1] u = np.zeros(m)
    cdef cnp.ndarray[double, ndim=1] v = np.zeros(n)
    cdef cnp.ndarray[double, ndim=1] w = np.ones(n)
    cdef cnp.ndarray[double, ndim=1] col = np.empty(n)
    cdef cnp.ndarray[double, ndim=1] errs = np.empty(max_iter)
    cdef Py_ssize_t i, j, it
    cdef double s, err, amax, bmax, val
    cdef bint converged = False
    cdef int niter = 0

    for i in range(m):
        for j in range(n):
            val = exp(-C[i, j] / epsilon)
            M[i, j] = val if val > KERNEL_FLOOR else KERNEL_FLOOR

    for it in range(1, max_iter + 1):
        niter = it
        # a = alpha / (M b)
        amax = 0.0
        for i in range(m):
            s = 0.0
            for j in range(n):
                s += M[i, j] * b[j]
            a[i] = alpha[i] / s
            if a[i] > amax:
                amax = a[i]
        # col = M^T a;  b_new = w * (beta/col)^f
        for j in range(n):
            col[j] = 0.0
        for i in range(m):
            for j in range(n):
                col[j] += M[i, j] * a[i]
        err = 0.0
        bmax = 0.0
        for j in range(n):
            if f[j] == 1.0:
                b_new[j] = beta[j] / col[j]
            else:
                b_new[j] = w[j] * pow(beta[j] / col[j], f[j])
            val = fabs(b_new[j] - b[j])
            if val > err:
                err = val
            b[j] = b_new[j]
            if b[j] > bmax:
                bmax = b[j]
        errs[it - 1] = err
        if err < tol:
            converged = True
            break
        if amax > threshold or bmax > threshold:
            for i in range(m):
                u[i] += epsilon * log(a[i])
                a[i] = 1.0
            for j in range(n):
                v[j] += epsilon * log(b[j])
                if f[j] == 1.0:
                    w[j] = 1.0
                else:
                    w[j] = w[j] * pow(b[j], f[j] - 1.0)
                b[j] = 1.0
            for i in range(m):
                for j in range(n):
                    M[i, j] = exp((u[i] - C[i, j] + v[j]) / epsilon)

    cdef cnp.ndarray[double, ndim=2] Q = np.empty((m, n))
    for i in range(m):
        for j in range(n):
            Q[i, j] = a[i] * M[i, j] * b[j]
    return Q, niter, converged, errs[:niter].copy()


def gsa_total_mass(
    cnp.ndarray[double, ndim=2] C,
    cnp.ndarray[double, ndim=1] alpha,
    cnp.ndarray[double, ndim=1] beta,
    cnp.ndarray[double, ndim=1] f,
    double rho,
    double epsilon,
    double tol,
    int max_iter,
):
    cdef Py_ssize_t m = C.shape[0]
    cdef Py_ssize_t n = C.shape[1]
    cdef cnp.ndarray[double, ndim=2] M = np.empty((m, n))
    cdef cnp.ndarray[double, ndim=1] a = np.ones(m)
    cdef cnp.ndarray[double, ndim=1] b = np.ones(n)
    cdef cnp.ndarray[double, ndim=1] b_new = np.empty(n)
    cdef cnp.ndarray[double, ndim=1] col = np.empty(n)
    cdef cnp.ndarray[double, ndim=1] errs = np.empty(max_iter)
    cdef Py_ssize_t i, j, it
    cdef double s = 1.0
    cdef double acc, err, val, mass
    cdef bint converged = False
    cdef int niter = 0

    for i in range(m):
        for j in range(n):
            val = exp(-C[i, j] / epsilon)
            M[i, j] = val if val > KERNEL_FLOOR else KERNEL_FLOOR

    for it in range(1, max_iter + 1):
        niter = it
        for i in range(m):
            acc = 0.0
            for j in range(n):
                acc += M[i, j] * b[j]
            val = alpha[i] / (s * acc)
            a[i] = val if val < 1.0 else 1.0
        for j in range(n):
            col[j] = 0.0
        for i in range(m):
            for j in range(n):
                col[j] += M[i, j] * a[i]
        err = 0.0
        mass = 0.0
        for j in range(n):
            b_new[j] = pow(beta[j] / (s * col[j]), f[j])
            val = fabs(b_new[j] - b[j])
            if val > err:
                err = val
            b[j] = b_new[j]
            mass += col[j] * b[j]
        s = rho / mass
        errs[it - 1] = err
        if err < tol:
            converged = True
            break

    cdef cnp.ndarray[double, ndim=2] Q = np.empty((m, n))
    for i in range(m):
        for j in range(n):
            Q[i, j] = s * a[i] * M[i, j] * b[j]
    return Q, niter, converged, errs[:niter].copy()
