"""Kernel backend selection.

The compiled extension is used when it was built; otherwise (or when the
``SALFER_PURE_PYTHON`` environment variable is set) the numpy fallback is used.
Both produce identical numbers.
"""
import os

from . import _kernels_py

BACKEND = "python"
_impl = _kernels_py

if not os.environ.get("SALFER_PURE_PYTHON"):
    try:
        from . import _kernels as _compiled
    except ImportError:
        pass
    else:
        _impl = _compiled
        BACKEND = "compiled"

im2col = _impl.im2col
col2im = _impl.col2im
maxpool2_forward = _impl.maxpool2_forward
maxpool2_backward = _impl.maxpool2_backward
cascade_scan = _impl.cascade_scan


def compiled_available():
    try:
        from . import _kernels  # noqa: F401
    except ImportError:
        return False
    return True
