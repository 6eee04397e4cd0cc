# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled kernels mirroring ``_pykernels`` (same signatures and semantics).

Matrices are C-contiguous float64; products go through BLAS dgemm with the
row-major/column-major swap (C^T = B^T A^T) so no copies are needed.
"""

import numpy as np
cimport numpy as cnp
from libc.math cimport exp, sqrt, isfinite, INFINITY
from libc.string cimport memcpy
from scipy.linalg.cython_blas cimport dgemm

from .errors import DivergenceError

cnp.import_array()

DEF MAX_LAYERS = 3


cdef inline void mm_nn(double* A, double* B, double* C, int m, int k, int n, double beta) noexcept nogil:
    # C[m,n] = A[m,k] @ B[k,n] + beta * C
    cdef char tr = b'N'
    cdef double one = 1.0
    dgemm(&tr, &tr, &n, &m, &k, &one, B, &n, A, &k, &beta, C, &n)


cdef inline void mm_tn(double* A, double* B, double* C, int m, int k, int n, double beta) noexcept nogil:
    # C[k,n] = A[m,k]^T @ B[m,n] + beta * C
    cdef char ta = b'N'
    cdef char tb = b'T'
    cdef double one = 1.0
    dgemm(&ta, &tb, &n, &k, &m, &one, B, &n, A, &k, &beta, C, &n)


cdef inline void mm_nt(double* A, double* B, double* C, int m, int k, int n, double beta) noexcept nogil:
    # C[m,n] = A[m,k] @ B[n,k]^T + beta * C
    cdef char ta = b'T'
    cdef char tb = b'N'
    cdef double one = 1.0
    dgemm(&ta, &tb, &n, &m, &k, &one, B, &k, A, &k, &beta, C, &n)


def savgol_valid(const double[:, ::1] X, const double[::1] coeffs):
    cdef Py_ssize_t n = X.shape[0], m = X.shape[1], w = coeffs.shape[0]
    cdef Py_ssize_t mo = m - w + 1
    out = np.empty((n, mo))
    cdef double[:, ::1] o = out
    cdef Py_ssize_t i, j, k
    cdef double acc
    with nogil:
        for i in range(n):
            for j in range(mo):
                acc = 0.0
                for k in range(w):
                    acc = acc + coeffs[k] * X[i, j + k]
                o[i, j] = acc
    return out


cdef void _forward(double** Wp, double** bp, double** acts, int* sizes, int L, int n) noexcept nogil:
    # acts[0] is the input; acts[l+1] = act(acts[l] @ W[l] + b[l])
    cdef int l, i, j, fo
    cdef double* a
    cdef double* bb
    for l in range(L):
        fo = sizes[l + 1]
        a = acts[l + 1]
        bb = bp[l]
        for i in range(n):
            for j in range(fo):
                a[i * fo + j] = bb[j]
        mm_nn(acts[l], Wp[l], a, n, sizes[l], fo, 1.0)
        if l < L - 1:
            for i in range(n * fo):
                a[i] = 1.0 / (1.0 + exp(-a[i]))


def train_full_batch(Xs, t, Xv, tv, weights, biases, double lr, double decay,
                     int max_epochs, int patience, double l2):
    cdef int L = len(weights)
    if L < 1 or L > MAX_LAYERS:
        raise ValueError("between 1 and 3 weight layers supported")
    Xs = np.ascontiguousarray(Xs, dtype=np.float64)
    Xv = np.ascontiguousarray(Xv, dtype=np.float64)
    cdef double[::1] tt = np.ascontiguousarray(t, dtype=np.float64)
    cdef double[::1] tvv = np.ascontiguousarray(tv, dtype=np.float64)
    cdef int n = Xs.shape[0]
    cdef int nv = Xv.shape[0]

    cdef int sizes[MAX_LAYERS + 1]
    cdef double* Wp[MAX_LAYERS]
    cdef double* bp[MAX_LAYERS]
    cdef double* gWp[MAX_LAYERS]
    cdef double* gbp[MAX_LAYERS]
    cdef double* bWp[MAX_LAYERS]
    cdef double* bbp[MAX_LAYERS]
    cdef double* acts[MAX_LAYERS + 1]
    cdef double* vacts[MAX_LAYERS + 1]
    cdef double* deltas[MAX_LAYERS + 1]

    keep = []  # owns every buffer referenced by the raw pointers above

    def own(arr):
        arr = np.ascontiguousarray(arr, dtype=np.float64)
        keep.append(arr)
        return arr

    cdef cnp.ndarray tmp
    W_list, b_list, bW_list, bb_list = [], [], [], []
    cdef int l
    for l in range(L):
        Wl = own(np.array(weights[l], dtype=np.float64, copy=True))
        bl = own(np.array(biases[l], dtype=np.float64, copy=True))
        W_list.append(Wl)
        b_list.append(bl)
        sizes[l] = Wl.shape[0]
        sizes[l + 1] = Wl.shape[1]
        tmp = Wl
        Wp[l] = <double*> tmp.data
        tmp = bl
        bp[l] = <double*> tmp.data
        tmp = own(np.zeros_like(Wl))
        gWp[l] = <double*> tmp.data
        tmp = own(np.zeros_like(bl))
        gbp[l] = <double*> tmp.data
        bWl = own(Wl.copy())
        bbl = own(bl.copy())
        bW_list.append(bWl)
        bb_list.append(bbl)
        tmp = bWl
        bWp[l] = <double*> tmp.data
        tmp = bbl
        bbp[l] = <double*> tmp.data
    if sizes[L] != 1:
        raise ValueError("output layer must have a single unit")

    tmp = own(Xs)
    acts[0] = <double*> tmp.data
    tmp = own(Xv)
    vacts[0] = <double*> tmp.data
    for l in range(1, L + 1):
        tmp = own(np.empty((n, sizes[l])))
        acts[l] = <double*> tmp.data
        tmp = own(np.empty((nv, sizes[l])))
        vacts[l] = <double*> tmp.data
        tmp = own(np.empty((n, sizes[l])))
        deltas[l] = <double*> tmp.data

    hist_t_arr = np.empty(max_epochs)
    hist_v_arr = np.empty(max_epochs)
    cdef double[::1] hist_t = hist_t_arr
    cdef double[::1] hist_v = hist_v_arr

    cdef double best = INFINITY
    cdef int best_epoch = -1
    cdef int bad = 0
    cdef int e = 0
    cdef int status = 0  # 1: diverged, 2: never finite
    cdef int i, j, fi, fo, sz
    cdef double r, mse, vr, pen, loss, g2, h
    cdef double* out
    cdef double* d
    cdef double* dprev
    cdef double* a

    with nogil:
        for e in range(max_epochs):
            _forward(Wp, bp, acts, sizes, L, n)
            out = acts[L]
            d = deltas[L]
            mse = 0.0
            for i in range(n):
                r = out[i] - tt[i]
                mse = mse + r * r
                d[i] = r
            mse = mse / n
            pen = 0.0
            for l in range(L):
                sz = sizes[l] * sizes[l + 1]
                for i in range(sz):
                    pen = pen + Wp[l][i] * Wp[l][i]
            loss = mse + l2 * pen
            if not isfinite(loss):
                status = 1
                break

            _forward(Wp, bp, vacts, sizes, L, nv)
            vr = 0.0
            for i in range(nv):
                r = vacts[L][i] - tvv[i]
                vr = vr + r * r
            vr = sqrt(vr / nv)
            hist_t[e] = sqrt(mse)
            hist_v[e] = vr
            if vr < best:
                best = vr
                best_epoch = e
                bad = 0
                for l in range(L):
                    memcpy(bWp[l], Wp[l], sizes[l] * sizes[l + 1] * sizeof(double))
                    memcpy(bbp[l], bp[l], sizes[l + 1] * sizeof(double))
            else:
                bad = bad + 1
                if bad >= patience:
                    break

            # backward: deltas[L] currently holds residuals; scale to dL/dout
            g2 = 2.0 / n
            for i in range(n):
                d[i] = d[i] * g2
            for l in range(L - 1, -1, -1):
                fi = sizes[l]
                fo = sizes[l + 1]
                d = deltas[l + 1]
                # gW = acts[l]^T @ d + 2*l2*W
                for i in range(fi * fo):
                    gWp[l][i] = 2.0 * l2 * Wp[l][i]
                mm_tn(acts[l], d, gWp[l], n, fi, fo, 1.0)
                for j in range(fo):
                    gbp[l][j] = 0.0
                for i in range(n):
                    for j in range(fo):
                        gbp[l][j] = gbp[l][j] + d[i * fo + j]
                if l > 0:
                    dprev = deltas[l]
                    mm_nt(d, Wp[l], dprev, n, fo, fi, 0.0)
                    a = acts[l]
                    for i in range(n * fi):
                        h = a[i]
                        dprev[i] = dprev[i] * h * (1.0 - h)
            for l in range(L):
                sz = sizes[l] * sizes[l + 1]
                for i in range(sz):
                    Wp[l][i] = Wp[l][i] - lr * gWp[l][i]
                for j in range(sizes[l + 1]):
                    bp[l][j] = bp[l][j] - lr * gbp[l][j]
            lr = lr * decay

    if status == 1:
        raise DivergenceError(f"training loss became non-finite at epoch {e}", epoch=e)
    if best_epoch < 0:
        raise DivergenceError("validation error never became finite", epoch=e)
    cdef int n_run = e + 1
    return (bW_list, bb_list, hist_t_arr[:n_run].copy(), hist_v_arr[:n_run].copy(), best_epoch)
