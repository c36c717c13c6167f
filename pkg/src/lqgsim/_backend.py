"""Pick the compiled kernels when the extension is installed, else the pure
numpy twins. Both produce bit-identical output, so the choice only affects
speed. Set LQGSIM_FORCE_PURE=1 to insist on the pure backend.
"""

from __future__ import annotations

import os

from . import _kernels_py

if os.environ.get("LQGSIM_FORCE_PURE", "").strip() not in ("", "0"):
    _impl = _kernels_py
else:
    try:
        from . import _kernels as _impl  # type: ignore[no-redef]
    except ImportError:
        _impl = _kernels_py

BACKEND: str = _impl.BACKEND

dyck_parents = _impl.dyck_parents
propagate_labels = _impl.propagate_labels
ctrw_exit_chunk = _impl.ctrw_exit_chunk
ctrw_mask_exit_chunk = _impl.ctrw_mask_exit_chunk
ctrw_record_chunk = _impl.ctrw_record_chunk


def backend_name() -> str:
    """Return "cython" when the compiled extension is active, "pure" otherwise."""
    return BACKEND
