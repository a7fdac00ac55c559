"""Fusion kernel backend selection.

The compiled Cython extension ``_core`` is preferred when importable; the
pure NumPy module ``_pure`` is the always-available fallback and the
reference the extension is tested against.  Set ``RETSIMD_PURE_KERNELS=1``
to force the fallback (useful for debugging and the parity benchmark).
"""

from __future__ import annotations

import os

from . import _pure

if os.environ.get("RETSIMD_PURE_KERNELS") == "1":
    _impl = _pure
else:
    try:
        from . import _core as _impl  # type: ignore[no-redef]
    except ImportError:
        _impl = _pure

gcn2_forward = _impl.gcn2_forward
gcn2_backward = _impl.gcn2_backward
attn_fuse_forward = _impl.attn_fuse_forward
attn_fuse_backward = _impl.attn_fuse_backward


def backend_name() -> str:
    """Which implementation is active: ``compiled`` or ``pure``."""
    return _impl.BACKEND


def get_backend(name: str):
    """Fetch a specific backend module by name (for parity tests/benchmarks)."""
    if name == "pure":
        return _pure
    if name == "compiled":
        from . import _core

        return _core
    raise ValueError(f"unknown kernel backend {name!r}")
