# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled criterion kernels; see _kernels_py.py for the reference fallback."""

import numpy as np
cimport numpy as cnp
from libc.math cimport log, sqrt, INFINITY
from libc.stdlib cimport malloc, free

cnp.import_array()


cdef double _pivoted_logdet(double* S, int m, char* active, double* inv,
                            double rel_tol, double log_floor) noexcept nogil:
    # Destroys S. Returns -inf when numerically singular. The matrix is first
    # scaled to unit diagonal so rel_tol does not depend on parameter units.
    cdef int i, j, r, c, piv
    cdef double best, val, ld = 0.0, f
    for i in range(m):
        active[i] = 1
        if S[i * m + i] <= 0.0:
            return -INFINITY
        ld += log(S[i * m + i])
        inv[i] = 1.0 / sqrt(S[i * m + i])
    for r in range(m):
        for c in range(m):
            S[r * m + c] *= inv[r] * inv[c]
    for j in range(m):
        piv = -1
        best = -INFINITY
        for i in range(m):
            if active[i] and S[i * m + i] > best:
                best = S[i * m + i]
                piv = i
        val = best
        if val <= rel_tol:
            return -INFINITY
        ld += log(val)
        active[piv] = 0
        for r in range(m):
            if not active[r]:
                continue
            f = S[r * m + piv] / val
            for c in range(m):
                if active[c]:
                    S[r * m + c] -= f * S[piv * m + c]
    if ld <= log_floor:
        return -INFINITY
    return ld


def logdet_psd(const double[:, ::1] M, double rel_tol, double det_floor):
    cdef int m = M.shape[0]
    cdef double* S = <double*> malloc(m * m * sizeof(double))
    cdef char* active = <char*> malloc(m)
    cdef double* inv = <double*> malloc(m * sizeof(double))
    cdef int i, j
    cdef double out
    try:
        for i in range(m):
            for j in range(m):
                S[i * m + j] = M[i, j]
        out = _pivoted_logdet(S, m, active, inv, rel_tol, log(det_floor))
    finally:
        free(S)
        free(active)
        free(inv)
    return out


def batch_criterion(const double[:, :, :, ::1] G, const double[:, ::1] W, const double[::1] probs,
                    double rel_tol, double det_floor):
    """Φ for P designs: Σ_a probs[a]·log det Σ_k W[p,k] G[p,a,k] G[p,a,k]ᵀ."""
    cdef Py_ssize_t P = G.shape[0], A = G.shape[1], K = G.shape[2]
    cdef int m = <int> G.shape[3]
    cdef Py_ssize_t p, a, k
    cdef int r, c
    cdef double w, gr, ld, phi
    cdef double log_floor = log(det_floor)
    out = np.empty(P, dtype=np.float64)
    cdef double[::1] res = out
    cdef double* S = <double*> malloc(m * m * sizeof(double))
    cdef char* active = <char*> malloc(m)
    cdef double* inv = <double*> malloc(m * sizeof(double))
    try:
        with nogil:
            for p in range(P):
                phi = 0.0
                for a in range(A):
                    for r in range(m * m):
                        S[r] = 0.0
                    for k in range(K):
                        w = W[p, k]
                        if w == 0.0:
                            continue
                        for r in range(m):
                            gr = w * G[p, a, k, r]
                            if gr == 0.0:
                                continue
                            for c in range(r, m):
                                S[r * m + c] += gr * G[p, a, k, c]
                    for r in range(m):
                        for c in range(r):
                            S[r * m + c] = S[c * m + r]
                    ld = _pivoted_logdet(S, m, active, inv, rel_tol, log_floor)
                    if ld == -INFINITY:
                        phi = -INFINITY
                        break
                    phi += probs[a] * ld
                res[p] = phi
    finally:
        free(S)
        free(active)
        free(inv)
    return out
