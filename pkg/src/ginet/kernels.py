"""Backend selection for the spatial kernels.

The compiled extension is used when it imports; otherwise the numpy
reference is used. ``GINET_KERNELS=python`` forces the fallback and
``GINET_KERNELS=cython`` makes a missing extension an error.
"""
import os

from ginet import _kernels_py

_choice = os.environ.get("GINET_KERNELS", "auto").lower()

if _choice == "python":
    _impl = _kernels_py
else:
    try:
        from ginet import _kernels_c as _impl
    except ImportError:
        if _choice == "cython":
            raise
        _impl = _kernels_py

BACKEND = "cython" if _impl is not _kernels_py else "python"

im2col = _impl.im2col
col2im = _impl.col2im
resize_bilinear = _impl.resize_bilinear
resize_bilinear_backward = _impl.resize_bilinear_backward
interp_weights = _kernels_py.interp_weights
