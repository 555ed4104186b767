# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled float32 convolution kernels.

The convolution is evaluated as slab-wise im2col packing (plain C loops with
memcpy/memset, no padded copies of the input) followed by a BLAS sgemm.  The
packing is the bandwidth-bound part that the pure numpy fallback does through
generic strided copies; doing it in C is what this extension buys.
"""

import numpy as np

cimport numpy as cnp
from libc.string cimport memcpy, memset
from scipy.linalg.cython_blas cimport sgemm

cnp.import_array()

BACKEND_NAME = "compiled"

# cols buffer target size (floats); bounds slab memory at ~32 MB
DEF TARGET_COLS_FLOATS = 8_000_000


cdef void _pack_slab(const float* x, float* cols, int C, int H, int W, int F,
                     int KH, int KW, int KF, int h0, int h1) noexcept nogil:
    """Pack one output-row slab into cols (K x svox), K rows of taps."""
    cdef int slab_h = h1 - h0
    cdef long svox = <long>slab_h * W * F
    cdef long base, row = 0
    cdef int ph = KH // 2, pw = KW // 2, pf = KF // 2
    cdef int ci, kh, kw, kf, h, w, hh, ww, dh, dw, df, f0, f1
    cdef float* dst
    cdef float* d2
    cdef const float* src
    for ci in range(C):
        for kh in range(KH):
            dh = kh - ph
            for kw in range(KW):
                dw = kw - pw
                for kf in range(KF):
                    df = kf - pf
                    dst = cols + row * svox
                    row += 1
                    for h in range(h0, h1):
                        hh = h + dh
                        base = (<long>(h - h0)) * W * F
                        if hh < 0 or hh >= H:
                            memset(dst + base, 0, <size_t>W * F * sizeof(float))
                            continue
                        for w in range(W):
                            ww = w + dw
                            d2 = dst + base + <long>w * F
                            if ww < 0 or ww >= W:
                                memset(d2, 0, <size_t>F * sizeof(float))
                                continue
                            src = x + ((<long>ci * H + hh) * W + ww) * F
                            f0 = -df if df < 0 else 0
                            f1 = F - df if df > 0 else F
                            if f0 > 0:
                                d2[0] = 0.0
                            if f1 < F:
                                d2[F - 1] = 0.0
                            memcpy(d2 + f0, src + f0 + df, <size_t>(f1 - f0) * sizeof(float))


cdef void _sgemm_rowmajor(char transa, char transb, int m, int n, int k,
                          float alpha, const float* a, int lda,
                          const float* b, int ldb,
                          float beta, float* c, int ldc) noexcept nogil:
    # Row-major C(m,n) = op(A) op(B): feed the transposed problem to the
    # Fortran routine, swapping operand order.
    sgemm(&transb, &transa, &n, &m, &k, &alpha,
          <float*>b, &ldb, <float*>a, &lda, &beta, c, &ldc)


def conv3d_forward(cnp.ndarray x_arr, cnp.ndarray w_arr, bias=None):
    """x (N,C,H,W,F) float32, w (Co,C,KH,KW,KF) float32 -> (N,Co,H,W,F)."""
    cdef const float[:, :, :, :, ::1] x = np.ascontiguousarray(x_arr, dtype=np.float32)
    cdef const float[:, :, :, :, ::1] w = np.ascontiguousarray(w_arr, dtype=np.float32)
    cdef int N = x.shape[0], C = x.shape[1], H = x.shape[2], W = x.shape[3], F = x.shape[4]
    cdef int Co = w.shape[0], KH = w.shape[2], KW = w.shape[3], KF = w.shape[4]
    if w.shape[1] != C:
        raise ValueError(f"channel mismatch: input {C}, kernel {w.shape[1]}")
    cdef long K = <long>C * KH * KW * KF
    cdef long HWF = <long>H * W * F

    out_arr = np.empty((N, Co, H, W, F), dtype=np.float32)
    cdef float[:, :, :, :, ::1] out = out_arr

    cdef int slab_h = <int>max(1, min(H, TARGET_COLS_FLOATS // max(1, K * W * F)))
    cols_arr = np.empty((K, <long>slab_h * W * F), dtype=np.float32)
    cdef float[:, ::1] cols = cols_arr

    cdef int n, h0, h1
    cdef long svox
    cdef const float* xptr
    cdef float* optr
    with nogil:
        for n in range(N):
            xptr = &x[n, 0, 0, 0, 0]
            h0 = 0
            while h0 < H:
                h1 = h0 + slab_h
                if h1 > H:
                    h1 = H
                svox = <long>(h1 - h0) * W * F
                _pack_slab(xptr, &cols[0, 0], C, H, W, F, KH, KW, KF, h0, h1)
                optr = &out[n, 0, h0, 0, 0]
                # out_slab (Co x svox, row stride HWF) = w (Co x K) @ cols (K x svox)
                _sgemm_rowmajor(b'N', b'N', Co, <int>svox, <int>K,
                                1.0, &w[0, 0, 0, 0, 0], <int>K,
                                &cols[0, 0], <int>svox,
                                0.0, optr, <int>HWF)
                h0 = h1
    if bias is not None:
        out_arr += np.asarray(bias, dtype=np.float32).reshape(1, -1, 1, 1, 1)
    return out_arr


def conv3d_grad_weights(cnp.ndarray x_arr, cnp.ndarray dy_arr, kshape):
    """Accumulate dL/dw for the same-padded convolution."""
    cdef const float[:, :, :, :, ::1] x = np.ascontiguousarray(x_arr, dtype=np.float32)
    cdef const float[:, :, :, :, ::1] dy = np.ascontiguousarray(dy_arr, dtype=np.float32)
    cdef int KH = kshape[0], KW = kshape[1], KF = kshape[2]
    cdef int N = x.shape[0], C = x.shape[1], H = x.shape[2], W = x.shape[3], F = x.shape[4]
    cdef int Co = dy.shape[1]
    cdef long K = <long>C * KH * KW * KF
    cdef long HWF = <long>H * W * F

    dw_arr = np.zeros((Co, C, KH, KW, KF), dtype=np.float32)
    cdef float[:, :, :, :, ::1] dw = dw_arr

    cdef int slab_h = <int>max(1, min(H, TARGET_COLS_FLOATS // max(1, K * W * F)))
    cols_arr = np.empty((K, <long>slab_h * W * F), dtype=np.float32)
    cdef float[:, ::1] cols = cols_arr

    cdef int n, h0, h1
    cdef long svox
    cdef const float* xptr
    cdef const float* dptr
    with nogil:
        for n in range(N):
            xptr = &x[n, 0, 0, 0, 0]
            h0 = 0
            while h0 < H:
                h1 = h0 + slab_h
                if h1 > H:
                    h1 = H
                svox = <long>(h1 - h0) * W * F
                _pack_slab(xptr, &cols[0, 0], C, H, W, F, KH, KW, KF, h0, h1)
                dptr = &dy[n, 0, h0, 0, 0]
                # dw (Co x K) += dy_slab (Co x svox, stride HWF) @ cols^T (svox x K)
                _sgemm_rowmajor(b'N', b'T', Co, <int>K, <int>svox,
                                1.0, dptr, <int>HWF,
                                &cols[0, 0], <int>svox,
                                1.0, &dw[0, 0, 0, 0, 0], <int>K)
                h0 = h1
    return dw_arr
