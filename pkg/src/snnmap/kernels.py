"""Convolution kernel backend selection.

The compiled Cython core is used when present; otherwise the numpy
im2col kernels take over. ``SNNMAP_BACKEND=numpy`` forces the fallback,
``SNNMAP_BACKEND=cython`` makes a missing extension a hard error (useful
in benchmarks and CI).
"""

import os

from . import _kernels_py

_requested = os.environ.get("SNNMAP_BACKEND", "").strip().lower()

_impl = None
if _requested in ("", "cython"):
    try:
        from . import _kernels as _impl  # compiled extension
    except ImportError:
        if _requested == "cython":
            raise ImportError(
                "SNNMAP_BACKEND=cython but the compiled snnmap._kernels extension "
                "is not built; reinstall with a C toolchain or unset the variable"
            )
        _impl = None
elif _requested != "numpy":
    raise ValueError(f"unknown SNNMAP_BACKEND {_requested!r} (expected 'cython' or 'numpy')")

if _impl is None:
    _impl = _kernels_py

BACKEND = _impl.BACKEND_NAME

conv_output_hw = _impl.conv_output_hw
conv2d_forward = _impl.conv2d_forward
conv2d_backward_input = _impl.conv2d_backward_input
conv2d_backward_kernels = _impl.conv2d_backward_kernels


def available_backends():
    """Name -> module for every backend importable in this environment."""
    found = {"numpy": _kernels_py}
    try:
        from . import _kernels

        found["cython"] = _kernels
    except ImportError:
        pass
    return found
