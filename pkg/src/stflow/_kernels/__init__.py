"""Hot assembly loops: compiled extension when available, numpy fallback.

Set STFLOW_PURE=1 to force the fallback. Both backends implement the same
two functions with identical floating-point semantics (the extension is
built with FP contraction off), so results match bit for bit.
"""

import os

BACKEND = "pure"
_impl = None

if os.environ.get("STFLOW_PURE", "").lower() not in ("1", "true", "yes"):
    try:
        from . import _core as _impl  # type: ignore[attr-defined]

        BACKEND = "compiled"
    except ImportError:
        _impl = None

if _impl is None:
    from . import pure as _impl

face_scatter_residual = _impl.face_scatter_residual
face_jacobian_values = _impl.face_jacobian_values

__all__ = ["BACKEND", "face_scatter_residual", "face_jacobian_values"]
