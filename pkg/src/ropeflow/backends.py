"""Kernel backend selection.

The hot inner kernels (rotary rotation, GELU, row softmax, row entropy)
exist twice: numba-compiled and pure numpy. The active backend is chosen
once at import time from the ROPEFLOW_BACKEND environment variable:

    ROPEFLOW_BACKEND=auto    numba when importable, else numpy (default)
    ROPEFLOW_BACKEND=numba   require numba, fail loudly if missing
    ROPEFLOW_BACKEND=numpy   force the pure-numpy fallback

`benchmarks/bench_kernels.py` times the two side by side.
"""

import os

from .errors import ConfigError

_requested = os.environ.get("ROPEFLOW_BACKEND", "auto").strip().lower()

if _requested in ("", "auto"):
    try:
        from . import _kernels_numba as _impl
        BACKEND = "numba"
    except ImportError:
        from . import _kernels_numpy as _impl
        BACKEND = "numpy"
elif _requested == "numba":
    from . import _kernels_numba as _impl
    BACKEND = "numba"
elif _requested == "numpy":
    from . import _kernels_numpy as _impl
    BACKEND = "numpy"
else:
    raise ConfigError(
        f"ROPEFLOW_BACKEND={_requested!r}: expected 'auto', 'numba' or 'numpy'"
    )

gelu = _impl.gelu
gelu_grad = _impl.gelu_grad
rotary_rotate = _impl.rotary_rotate
softmax_rows = _impl.softmax_rows
softmax_rows_grad = _impl.softmax_rows_grad
entropy_rows = _impl.entropy_rows


def set_num_threads(n: int) -> None:
    """Cap numba's thread pool; a no-op on the numpy backend."""
    if n < 1:
        raise ConfigError("thread count must be >= 1")
    if BACKEND == "numba":
        import numba

        numba.set_num_threads(n)
