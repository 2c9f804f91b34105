# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled beamforming kernel; same contract as ``_kernels_py.beamform_kernel``.

Pixels sharing a lower range bin form one group. For each group the image
block ``frames x pixels`` is a single complex matrix product of the two
range rows with the group's weights, issued straight to BLAS without the
Python round trip, and scattered into the output in C.
"""

cimport cython
import numpy as np
cimport numpy as cnp
from scipy.linalg.cython_blas cimport zgemm


@cython.wraparound(True)
def beamform_kernel(samples, k0, frac, coef, out):
    order = np.argsort(k0, kind="stable").astype(np.int64)
    k_sorted = np.ascontiguousarray(k0[order], dtype=np.int64)
    f_sorted = frac[order]
    # Rows 0..K-1 weight bin k, rows K..2K-1 weight bin k+1.
    w = np.ascontiguousarray(np.concatenate([((1.0 - f_sorted)[:, None] * coef[order]).T,
                                             (f_sorted[:, None] * coef[order]).T]))
    starts = np.flatnonzero(np.r_[True, k_sorted[1:] != k_sorted[:-1]]).astype(np.int64)
    stops = np.r_[starts[1:], k_sorted.size].astype(np.int64)
    width = int((stops - starts).max()) if starts.size else 0
    buf = np.empty((samples.shape[0], max(width, 1)), dtype=np.complex128)
    _grouped(samples, k_sorted, order, w, starts, stops, buf, out)
    return out


cdef void _grouped(double complex[:, :, ::1] s,
                   const cnp.int64_t[::1] k_sorted,
                   const cnp.int64_t[::1] order,
                   double complex[:, ::1] w,
                   const cnp.int64_t[::1] starts,
                   const cnp.int64_t[::1] stops,
                   double complex[:, ::1] buf,
                   double complex[:, ::1] out) noexcept nogil:
    cdef int n_frames = <int>s.shape[0]
    cdef int n_el = <int>s.shape[2]
    cdef int lda = <int>(s.shape[1] * s.shape[2])
    cdef int ldw = <int>w.shape[1]
    cdef int depth = 2 * n_el
    cdef int n, ldc
    cdef Py_ssize_t g, j, t, a, b
    cdef cnp.int64_t k
    cdef double complex one = 1.0
    cdef double complex zero = 0.0
    cdef char trans = b'N'
    for g in range(starts.shape[0]):
        a = starts[g]
        b = stops[g]
        k = k_sorted[a]
        if k < 0:
            for t in range(n_frames):
                for j in range(a, b):
                    out[t, order[j]] = 0
            continue
        n = <int>(b - a)
        ldc = <int>buf.shape[1]
        # Column-major view: buf^T (n x T) = w^T (n x 2K) @ s_rows^T (2K x T).
        zgemm(&trans, &trans, &n, &n_frames, &depth, &one,
              &w[0, a], &ldw, &s[0, k, 0], &lda, &zero, &buf[0, 0], &ldc)
        for t in range(n_frames):
            for j in range(n):
                out[t, order[a + j]] = buf[t, j]
