"""Kernel backend selection.

The compiled extension is preferred; set ``FACTORENGINE_PURE_PYTHON=1`` to
force the NumPy fallback (useful for debugging and for the benchmark).
"""

import os

from . import _fallback

BACKENDS = {"python": _fallback}

try:
    from . import _kernels
except ImportError:  # extension not built
    _kernels = None
else:
    BACKENDS["compiled"] = _kernels

if _kernels is not None and not os.environ.get("FACTORENGINE_PURE_PYTHON"):
    BACKEND = "compiled"
else:
    BACKEND = "python"

_impl = BACKENDS[BACKEND]
asof_index = _impl.asof_index
fill_index = _impl.fill_index
simulate = _impl.simulate
