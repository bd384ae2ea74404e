# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled dense-network kernels.

Same contract as ``fedsim._fallback``. Matrix products go through BLAS
``dgemm`` via scipy's Cython bindings; bias, ReLU, softmax and the
cross-entropy reduction are fused loops that run without the GIL.
"""

import numpy as np

from libc.math cimport exp, log
from scipy.linalg.cython_blas cimport dgemm

NAME = "compiled"

cdef double PROB_FLOOR = 1e-12


cdef inline void _rm_gemm(char ta, char tb, int m, int n, int k,
                          double *a, int lda, double *b, int ldb,
                          double beta, double *c, int ldc) noexcept nogil:
    # Row-major C(m, n) = op(A) @ op(B) + beta * C, via column-major dgemm on the transposes.
    cdef double alpha = 1.0
    dgemm(&tb, &ta, &n, &m, &k, &alpha, b, &ldb, a, &lda, &beta, c, &ldc)


cdef int _forward(const double[::1] values, int[::1] sizes, int n_layers,
                 list acts) except -1:
    """Fill ``acts[1:]`` with post-activation outputs; the last holds logits."""
    cdef Py_ssize_t off = 0
    cdef int layer, i, j, n_in, n_out
    cdef const double[:, ::1] h
    cdef double[:, ::1] z
    cdef const double *w
    cdef const double *bias
    cdef int n = acts[0].shape[0]
    for layer in range(n_layers):
        n_in = sizes[layer]
        n_out = sizes[layer + 1]
        h = acts[layer]
        z = acts[layer + 1]
        w = &values[off]
        bias = &values[off + n_in * n_out]
        with nogil:
            _rm_gemm(b'N', b'N', n, n_out, n_in, <double *> &h[0, 0], n_in,
                     <double *> w, n_out, 0.0, &z[0, 0], n_out)
            if layer < n_layers - 1:
                for i in range(n):
                    for j in range(n_out):
                        z[i, j] += bias[j]
                        if z[i, j] < 0.0:
                            z[i, j] = 0.0
            else:
                for i in range(n):
                    for j in range(n_out):
                        z[i, j] += bias[j]
        off += n_in * n_out + n_out
    return 0


cdef void _softmax_rows(double[:, ::1] z) noexcept nogil:
    cdef Py_ssize_t i, j
    cdef double mx, s
    for i in range(z.shape[0]):
        mx = z[i, 0]
        for j in range(1, z.shape[1]):
            if z[i, j] > mx:
                mx = z[i, j]
        s = 0.0
        for j in range(z.shape[1]):
            z[i, j] = exp(z[i, j] - mx)
            s += z[i, j]
        for j in range(z.shape[1]):
            z[i, j] /= s


def _alloc(x, sizes):
    n = x.shape[0]
    return [x] + [np.empty((n, s)) for s in sizes[1:]]


def mlp_forward(values, sizes, x):
    cdef int[::1] sz = np.asarray(sizes, dtype=np.intc)
    acts = _alloc(x, sizes)
    _forward(values, sz, len(sizes) - 1, acts)
    cdef double[:, ::1] p = acts[len(acts) - 1]
    with nogil:
        _softmax_rows(p)
    return acts[len(acts) - 1]


def mlp_loss_grad(values, sizes, x, y):
    cdef int[::1] sz = np.asarray(sizes, dtype=np.intc)
    cdef int n_layers = len(sizes) - 1
    cdef long long[::1] lab = np.ascontiguousarray(y, dtype=np.int64)
    acts = _alloc(x, sizes)
    _forward(values, sz, n_layers, acts)

    cdef double[:, ::1] p = acts[len(acts) - 1]
    cdef int n = p.shape[0]
    cdef int c = p.shape[1]
    cdef Py_ssize_t i, j
    cdef double loss = 0.0, q, inv_n = 1.0 / n
    with nogil:
        _softmax_rows(p)
        for i in range(n):
            q = p[i, lab[i]]
            if q < PROB_FLOOR:
                q = PROB_FLOOR
            loss -= log(q)
            p[i, lab[i]] -= 1.0
            for j in range(c):
                p[i, j] *= inv_n
    loss *= inv_n

    grad_arr = np.empty(values.shape[0])
    cdef double[::1] grad = grad_arr
    cdef const double[::1] vals = values
    cdef double[:, ::1] dz = p
    cdef const double[:, ::1] h_in
    cdef double[:, ::1] dh
    cdef int layer, n_in, n_out
    cdef Py_ssize_t off = values.shape[0]
    for layer in range(n_layers - 1, -1, -1):
        n_in = sz[layer]
        n_out = sz[layer + 1]
        off -= n_in * n_out + n_out
        h_in = acts[layer]
        with nogil:
            _rm_gemm(b'T', b'N', n_in, n_out, n, <double *> &h_in[0, 0], n_in,
                     &dz[0, 0], n_out, 0.0, &grad[off], n_out)
            for j in range(n_out):
                grad[off + n_in * n_out + j] = 0.0
            for i in range(n):
                for j in range(n_out):
                    grad[off + n_in * n_out + j] += dz[i, j]
        if layer > 0:
            dh = np.empty((n, n_in))
            with nogil:
                _rm_gemm(b'N', b'T', n, n_in, n_out, &dz[0, 0], n_out,
                         <double *> &vals[off], n_out, 0.0, &dh[0, 0], n_in)
                for i in range(n):
                    for j in range(n_in):
                        if h_in[i, j] <= 0.0:
                            dh[i, j] = 0.0
            dz = dh
    return float(loss), grad_arr


def weighted_average(stack, weights):
    """Row-weighted mean of ``stack`` (k, p), accumulated in row order."""
    cdef const double[:, ::1] s = np.ascontiguousarray(stack, dtype=np.float64)
    cdef const double[::1] w = np.ascontiguousarray(weights, dtype=np.float64)
    out_arr = np.zeros(s.shape[1])
    cdef double[::1] out = out_arr
    cdef Py_ssize_t k, i
    cdef double total = 0.0
    with nogil:
        for k in range(s.shape[0]):
            for i in range(s.shape[1]):
                out[i] += w[k] * s[k, i]
            total += w[k]
        for i in range(s.shape[1]):
            out[i] /= total
    return out_arr
