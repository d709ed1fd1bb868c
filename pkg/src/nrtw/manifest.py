"""Run manifests: enough provenance to reproduce a CLI run bit-exactly
(given the same thread count, which is recorded)."""

from __future__ import annotations

import json
import os
import platform
import time

import numpy as np

from . import __version__, kernels
from .formats import sha256_file

_THREAD_ENV_VARS = (
    "OMP_NUM_THREADS",
    "OPENBLAS_NUM_THREADS",
    "MKL_NUM_THREADS",
    "NUMBA_NUM_THREADS",
)


def environment_info() -> dict:
    try:
        import numba

        numba_version = numba.__version__
    except ImportError:
        numba_version = None
    return {
        "nrtw_version": __version__,
        "numpy_version": np.__version__,
        "numba_version": numba_version,
        "python_version": platform.python_version(),
        "kernel_backend": kernels.backend_name(),
        "blas_threads": kernels.blas_threads(),
        "cpu_count": os.cpu_count(),
        "thread_env": {var: os.environ.get(var) for var in _THREAD_ENV_VARS},
    }


class RunManifest:
    """Collects config, hashes and timings for one CLI invocation."""

    def __init__(self, subcommand: str, config: dict, seeds: dict | None = None):
        self._t0 = time.perf_counter()
        self.data = {
            "subcommand": subcommand,
            "config": config,
            "seeds": seeds or {},
            "inputs": {},
            "outputs": {},
            "timings": {},
            "environment": environment_info(),
            "created_unix": time.time(),
        }

    def add_input(self, label: str, path) -> None:
        self.data["inputs"][label] = {
            "path": str(path),
            "sha256": sha256_file(path),
        }

    def add_output(self, label: str, path) -> None:
        self.data["outputs"][label] = {
            "path": str(path),
            "sha256": sha256_file(path),
        }

    def add_timing(self, label: str, seconds: float) -> None:
        self.data["timings"][label] = seconds

    def record(self, key: str, value) -> None:
        self.data[key] = value

    def write(self, path) -> None:
        self.data["timings"]["total_seconds"] = time.perf_counter() - self._t0
        tmp = f"{path}.tmp"
        with open(tmp, "w", encoding="utf-8") as fh:
            json.dump(self.data, fh, indent=2, sort_keys=True)
            fh.write("\n")
        os.replace(tmp, path)
