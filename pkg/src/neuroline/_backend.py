"""Select the kernel implementation at import time.

The compiled module is used when it was built; setting
``NEUROLINE_PURE_PYTHON=1`` forces the fallback.
"""
import os

from neuroline import _pykernels

if os.environ.get("NEUROLINE_PURE_PYTHON"):
    kernels = _pykernels
    BACKEND = "python"
else:
    try:
        from neuroline import _ckernels as kernels
        BACKEND = "cython"
    except ImportError:
        kernels = _pykernels
        BACKEND = "python"


def available_backends():
    """Map backend name to kernel module for every importable implementation."""
    found = {"python": _pykernels}
    try:
        from neuroline import _ckernels
    except ImportError:
        pass
    else:
        found["cython"] = _ckernels
    return found
