"""Kernel backend selection.

The compiled extension is used when importable; ``MUMIMO_PURE_PYTHON=1``
forces the numpy fallback.
"""

import os

from . import _kernels_py

BACKEND = "python"
barrier_eval = _kernels_py.barrier_eval

if os.environ.get("MUMIMO_PURE_PYTHON", "") not in ("1", "true", "yes"):
    try:
        from . import _kernels as _compiled
    except ImportError:  # pragma: no cover - depends on the build
        _compiled = None
    if _compiled is not None:
        BACKEND = "cython"
        barrier_eval = _compiled.barrier_eval
