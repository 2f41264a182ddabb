"""Detector kernel backend selection.

Prefers the compiled enumeration kernel when it was built; otherwise the
numpy fallback is used. Setting the environment variable
``REPLICAMUD_PURE_PYTHON=1`` forces the fallback, which is handy for
benchmarking and for verifying backend parity.
"""

from __future__ import annotations

import os

from . import _fallback

if os.environ.get("REPLICAMUD_PURE_PYTHON"):
    _impl = _fallback
else:
    try:
        from . import _core as _impl  # type: ignore[no-redef]
    except ImportError:
        _impl = _fallback

BACKEND: str = _impl.BACKEND
io_soft_outputs = _impl.io_soft_outputs

__all__ = ["BACKEND", "io_soft_outputs"]
