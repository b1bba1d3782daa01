"""Kernel backend selection.

RAREMIX_BACKEND chooses the accumulation kernel: ``compiled`` (require the
Cython extension), ``python`` (force the NumPy fallback), or ``auto``
(default: compiled when available). The selected implementation is fixed at
import time; ``backend_name`` records the choice for reports.
"""

from __future__ import annotations

import os

_requested = os.environ.get("RAREMIX_BACKEND", "auto").lower()
if _requested not in ("auto", "compiled", "python"):
    raise ValueError(
        f"RAREMIX_BACKEND must be one of auto|compiled|python, got {_requested!r}"
    )

if _requested == "python":
    from . import _kernels_py as _impl

    backend_name = "python"
else:
    try:
        from . import _kernels as _impl  # type: ignore[attr-defined]

        backend_name = "compiled"
    except ImportError:
        if _requested == "compiled":
            raise
        from . import _kernels_py as _impl

        backend_name = "python"

em_accumulate = _impl.em_accumulate
