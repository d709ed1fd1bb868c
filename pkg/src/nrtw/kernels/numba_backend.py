"""Numba-compiled im2col / col2im.

Columns are channels-first, (N, C*k*k, H_out*W_out), matching
numpy_backend. Zero padding is fused into the gather/scatter loops (no
padded temporary); the innermost loops walk the output-pixel axis so both
reads and writes stay sequential. Single-threaded @njit: deterministic and
specialized per dtype on first call.
"""

import numpy as np
from numba import njit


@njit(cache=True)
def _im2col_core(x, kernel, stride, padding, h_out, w_out, cols):
    n, c, h, w = x.shape
    for ni in range(n):
        for ci in range(c):
            for ki in range(kernel):
                for kj in range(kernel):
                    row = (ci * kernel + ki) * kernel + kj
                    for oi in range(h_out):
                        ii = oi * stride - padding + ki
                        base = oi * w_out
                        if 0 <= ii < h:
                            for oj in range(w_out):
                                jj = oj * stride - padding + kj
                                if 0 <= jj < w:
                                    cols[ni, row, base + oj] = x[ni, ci, ii, jj]
                                else:
                                    cols[ni, row, base + oj] = 0.0
                        else:
                            for oj in range(w_out):
                                cols[ni, row, base + oj] = 0.0


@njit(cache=True)
def _col2im_core(cols, kernel, stride, padding, h_out, w_out, out):
    n, c, h, w = out.shape
    for ni in range(n):
        for ci in range(c):
            for ki in range(kernel):
                for kj in range(kernel):
                    row = (ci * kernel + ki) * kernel + kj
                    for oi in range(h_out):
                        ii = oi * stride - padding + ki
                        if ii < 0 or ii >= h:
                            continue
                        base = oi * w_out
                        for oj in range(w_out):
                            jj = oj * stride - padding + kj
                            if 0 <= jj < w:
                                out[ni, ci, ii, jj] += cols[ni, row, base + oj]


def im2col(x: np.ndarray, kernel: int, stride: int, padding: int) -> np.ndarray:
    """Patch matrix of shape (N, C*k*k, H_out*W_out) for a NCHW input."""
    x = np.ascontiguousarray(x)
    n, c, h, w = x.shape
    h_out = (h + 2 * padding - kernel) // stride + 1
    w_out = (w + 2 * padding - kernel) // stride + 1
    cols = np.empty((n, c * kernel * kernel, h_out * w_out), dtype=x.dtype)
    _im2col_core(x, kernel, stride, padding, h_out, w_out, cols)
    return cols


def col2im(
    cols: np.ndarray,
    shape: tuple,
    kernel: int,
    stride: int,
    padding: int,
) -> np.ndarray:
    """Adjoint of im2col: scatter-add columns back to an NCHW image."""
    n, c, h, w = shape
    h_out = (h + 2 * padding - kernel) // stride + 1
    w_out = (w + 2 * padding - kernel) // stride + 1
    out = np.zeros(shape, dtype=cols.dtype)
    _col2im_core(np.ascontiguousarray(cols), kernel, stride, padding, h_out, w_out, out)
    return out
