"""Convolution inner-loop kernels with selectable backends.

The hot path of every training/sweep iteration is im2col + GEMM + col2im.
Two interchangeable implementations exist:

* ``numba`` -- @njit compiled loops (default when numba imports cleanly)
* ``numpy`` -- stride-trick gather / sliced scatter, no compilation

Selection is controlled by the ``NRTW_KERNELS`` environment variable
("numba", "numpy", or "auto"), read once at import time. Both backends
produce bit-identical results for the same inputs; the GEMM itself is
always delegated to numpy's BLAS. ``benchmarks/bench_kernels.py`` compares
the two.
"""

import os
import warnings

from . import numpy_backend

_requested = os.environ.get("NRTW_KERNELS", "auto").strip().lower()
if _requested not in ("auto", "numba", "numpy"):
    raise ValueError(
        f"NRTW_KERNELS must be 'auto', 'numba' or 'numpy', got {_requested!r}"
    )

# The conv GEMMs here are short and skinny; BLAS worker-thread handoff costs
# more than it saves, so default to one BLAS thread. Override with
# NRTW_BLAS_THREADS; the active count lands in every run manifest.
_blas_threads = int(os.environ.get("NRTW_BLAS_THREADS", "1"))
try:
    import threadpoolctl

    threadpoolctl.threadpool_limits(limits=_blas_threads, user_api="blas")
except ImportError:  # leave whatever the environment configured
    _blas_threads = None


def blas_threads():
    """BLAS thread limit applied at import, or None if uncontrolled."""
    return _blas_threads

_impl = numpy_backend
_backend_name = "numpy"

if _requested in ("auto", "numba"):
    try:
        from . import numba_backend

        _impl = numba_backend
        _backend_name = "numba"
    except ImportError as exc:
        if _requested == "numba":
            raise
        warnings.warn(
            f"numba backend unavailable ({exc}); falling back to numpy kernels",
            RuntimeWarning,
        )

im2col = _impl.im2col
col2im = _impl.col2im


def backend_name() -> str:
    """Name of the active kernel backend ("numba" or "numpy")."""
    return _backend_name


def conv_output_size(size: int, kernel: int, stride: int, padding: int) -> int:
    return (size + 2 * padding - kernel) // stride + 1
