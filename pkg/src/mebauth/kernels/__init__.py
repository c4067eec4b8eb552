"""Hot numeric kernels with selectable backend.

Two interchangeable implementations exist: numba-compiled loops
(``_numba_backend``) and vectorized numpy (``_numpy_backend``). The
active one is chosen at import time from the ``MEBAUTH_KERNELS``
environment variable:

    MEBAUTH_KERNELS=numba   force numba (ImportError if unavailable)
    MEBAUTH_KERNELS=numpy   force the pure-numpy path
    MEBAUTH_KERNELS=auto    numba when importable, numpy otherwise (default)

Both backends are deterministic for fixed inputs; they may differ in
the last few ulps because their summation orders differ. See
``benchmarks/bench_kernels.py`` for a speed comparison.
"""

import os

from mebauth.kernels import _numpy_backend as numpy_backend

_choice = os.environ.get("MEBAUTH_KERNELS", "auto").strip().lower()
if _choice not in ("auto", "numba", "numpy"):
    raise ValueError(f"MEBAUTH_KERNELS must be auto, numba, or numpy, got {_choice!r}")

numba_backend = None
if _choice in ("auto", "numba"):
    try:
        from mebauth.kernels import _numba_backend as numba_backend
    except ImportError:
        if _choice == "numba":
            raise

_active = numba_backend if numba_backend is not None else numpy_backend

conv_forward = _active.conv_forward
conv_backward = _active.conv_backward
maxpool_forward = _active.maxpool_forward
maxpool_backward = _active.maxpool_backward


def backend_name() -> str:
    """Name of the backend the package is running on: 'numba' or 'numpy'."""
    return "numba" if _active is numba_backend else "numpy"


__all__ = [
    "backend_name",
    "conv_backward",
    "conv_forward",
    "maxpool_backward",
    "maxpool_forward",
    "numba_backend",
    "numpy_backend",
]
