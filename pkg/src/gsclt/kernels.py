"""Kernel selection: compiled extension when available, else pure Python.

Set ``GSCLT_PURE_PYTHON=1`` to force the fallback.
"""

from __future__ import annotations

import os

from . import _kernels_py

BACKEND = "python"
heat_bath_sweeps = _kernels_py.heat_bath_sweeps

if not os.environ.get("GSCLT_PURE_PYTHON"):
    try:
        from . import _kernels  # type: ignore[attr-defined]
    except ImportError:  # extension not built
        pass
    else:
        heat_bath_sweeps = _kernels.heat_bath_sweeps
        BACKEND = "cython"
