"""Pure-numpy im2col / col2im.

Columns are channels-first, (N, C*k*k, H_out*W_out): the output-pixel axis
stays innermost, so the gather is one sequential-write copy out of a
sliding-window view and the scatter is one vectorized strided add per
kernel offset.
"""

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view


def im2col(x: np.ndarray, kernel: int, stride: int, padding: int) -> np.ndarray:
    """Patch matrix of shape (N, C*k*k, H_out*W_out) for a NCHW input."""
    if padding > 0:
        x = np.pad(x, ((0, 0), (0, 0), (padding, padding), (padding, padding)))
    n, c = x.shape[:2]
    win = sliding_window_view(x, (kernel, kernel), axis=(2, 3))
    win = win[:, :, ::stride, ::stride]
    h_out, w_out = win.shape[2], win.shape[3]
    cols = win.transpose(0, 1, 4, 5, 2, 3).reshape(
        n, c * kernel * kernel, h_out * w_out
    )
    return np.ascontiguousarray(cols)


def col2im(
    cols: np.ndarray,
    shape: tuple,
    kernel: int,
    stride: int,
    padding: int,
) -> np.ndarray:
    """Adjoint of im2col: scatter-add columns back to an NCHW image."""
    n, c, h, w = shape
    h_p, w_p = h + 2 * padding, w + 2 * padding
    h_out = (h_p - kernel) // stride + 1
    w_out = (w_p - kernel) // stride + 1
    out = np.zeros((n, c, h_p, w_p), dtype=cols.dtype)
    blocks = cols.reshape(n, c, kernel, kernel, h_out, w_out)
    for ki in range(kernel):
        for kj in range(kernel):
            out[
                :,
                :,
                ki : ki + stride * h_out : stride,
                kj : kj + stride * w_out : stride,
            ] += blocks[:, :, ki, kj]
    if padding > 0:
        out = out[:, :, padding : padding + h, padding : padding + w]
    return np.ascontiguousarray(out)
