"""Hot-loop kernels, compiled when available.

The compiled extension is picked at import time. Set
``MULTIRADAR_PURE_PYTHON=1`` to force the numpy/scipy fallback.
"""

import os

from . import _kernels_py

BACKEND = "python"
beamform_kernel = _kernels_py.beamform_kernel

if os.environ.get("MULTIRADAR_PURE_PYTHON", "") not in ("1", "true", "yes"):
    try:
        from . import _kernels_ext
    except ImportError:
        pass
    else:
        beamform_kernel = _kernels_ext.beamform_kernel
        BACKEND = "compiled"


def available_backends():
    """Map backend name to kernel for every backend importable in this process."""
    found = {"python": _kernels_py.beamform_kernel}
    try:
        from . import _kernels_ext
    except ImportError:
        return found
    found["compiled"] = _kernels_ext.beamform_kernel
    return found
