"""1-D convolution kernels for the network's forward and backward passes.

These loops dominate training runtime. Each function exists in a numba
version and a numpy (im2col / BLAS) version; `wbsense.backend` decides
which one the dispatchers at the bottom use. Both paths are deterministic:
every output element is produced by exactly one thread, so reruns give
bit-identical results.

All kernels operate on zero-padded inputs of shape (batch, channels,
padded_length); padding is the caller's job.
"""

import numpy as np

from .backend import NUMBA_AVAILABLE, USE_NUMBA

# ---------------------------------------------------------------- numpy path


def _windows(xp: np.ndarray, kernel: int, stride: int) -> np.ndarray:
    """View of shape (B, Cin, Lout, K) over the padded input."""
    w = np.lib.stride_tricks.sliding_window_view(xp, kernel, axis=2)
    return w[:, :, ::stride]


def conv1d_fwd_np(xp, w, b, stride):
    win = _windows(xp, w.shape[2], stride)
    out = np.einsum("bilk,oik->bol", win, w, optimize=True)
    out += b[None, :, None]
    return out


def conv1d_bwd_w_np(gy, xp, kernel, stride):
    win = _windows(xp, kernel, stride)
    dw = np.einsum("bol,bilk->oik", gy, win, optimize=True)
    db = gy.sum(axis=(0, 2))
    return dw, db


def conv1d_bwd_x_np(gy, w, stride, padded_length):
    batch, _, lout = gy.shape
    cin = w.shape[1]
    kernel = w.shape[2]
    dxp = np.zeros((batch, cin, padded_length), dtype=gy.dtype)
    # One BLAS call per kernel tap; strided views avoid an explicit scatter.
    for k in range(kernel):
        contrib = np.einsum("bol,oi->bil", gy, w[:, :, k], optimize=True)
        dxp[:, :, k : k + stride * lout : stride] += contrib
    return dxp


# ---------------------------------------------------------------- numba path

if NUMBA_AVAILABLE:
    from numba import njit, prange

    @njit(parallel=True, cache=True)
    def _conv1d_fwd_nb(xp, w, b, stride, out):
        batch, cout, lout = out.shape
        cin = w.shape[1]
        kernel = w.shape[2]
        for bi in prange(batch):
            for co in range(cout):
                for t in range(lout):
                    acc = b[co]
                    t0 = t * stride
                    for ci in range(cin):
                        for k in range(kernel):
                            acc += w[co, ci, k] * xp[bi, ci, t0 + k]
                    out[bi, co, t] = acc

    @njit(parallel=True, cache=True)
    def _conv1d_bwd_x_nb(gy, w, stride, dxp):
        batch, cout, lout = gy.shape
        cin = w.shape[1]
        kernel = w.shape[2]
        for bi in prange(batch):
            for co in range(cout):
                for t in range(lout):
                    g = gy[bi, co, t]
                    t0 = t * stride
                    for ci in range(cin):
                        for k in range(kernel):
                            dxp[bi, ci, t0 + k] += g * w[co, ci, k]

    @njit(parallel=True, cache=True)
    def _conv1d_bwd_w_nb(gy, xp, stride, dw, db):
        batch, cout, lout = gy.shape
        cin = dw.shape[1]
        kernel = dw.shape[2]
        for co in prange(cout):
            bsum = 0.0
            for bi in range(batch):
                for t in range(lout):
                    g = gy[bi, co, t]
                    bsum += g
                    t0 = t * stride
                    for ci in range(cin):
                        for k in range(kernel):
                            dw[co, ci, k] += g * xp[bi, ci, t0 + k]
            db[co] = bsum

    def conv1d_fwd_nb(xp, w, b, stride):
        batch = xp.shape[0]
        lout = (xp.shape[2] - w.shape[2]) // stride + 1
        out = np.empty((batch, w.shape[0], lout), dtype=xp.dtype)
        _conv1d_fwd_nb(xp, w, b, stride, out)
        return out

    def conv1d_bwd_x_nb(gy, w, stride, padded_length):
        dxp = np.zeros((gy.shape[0], w.shape[1], padded_length), dtype=gy.dtype)
        _conv1d_bwd_x_nb(gy, w, stride, dxp)
        return dxp

    def conv1d_bwd_w_nb(gy, xp, kernel, stride):
        cout = gy.shape[1]
        dw = np.zeros((cout, xp.shape[1], kernel), dtype=gy.dtype)
        db = np.zeros(cout, dtype=gy.dtype)
        _conv1d_bwd_w_nb(gy, xp, stride, dw, db)
        return dw, db


# --------------------------------------------------------------- dispatchers

if USE_NUMBA:
    conv1d_fwd = conv1d_fwd_nb
    conv1d_bwd_x = conv1d_bwd_x_nb
    conv1d_bwd_w = conv1d_bwd_w_nb
else:
    conv1d_fwd = conv1d_fwd_np
    conv1d_bwd_x = conv1d_bwd_x_np
    conv1d_bwd_w = conv1d_bwd_w_np
