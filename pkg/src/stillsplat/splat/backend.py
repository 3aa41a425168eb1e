"""Rasterization kernel selection: compiled extension with numpy fallback.

The compiled module is preferred when importable; set ``STILLSPLAT_KERNELS``
to ``python`` or ``cython`` to force a backend (benchmarks and parity tests).
"""
from __future__ import annotations

import os

from . import _kernels_py

_forced = os.environ.get("STILLSPLAT_KERNELS", "").strip().lower()

_cy = None
if _forced != "python":
    try:
        from . import _kernels_cy as _cy
    except ImportError:
        _cy = None
        if _forced == "cython":
            raise ImportError(
                "STILLSPLAT_KERNELS=cython but the compiled kernels are not built; "
                "run `pip install -e . --no-build-isolation`"
            )

if _cy is not None:
    kernels = _cy
    ACTIVE_BACKEND = "cython"
else:
    kernels = _kernels_py
    ACTIVE_BACKEND = "python"


def get_backend(name: str | None = None):
    """Return (backend_name, kernel module); ``name`` forces a specific one."""
    if name in (None, "", "auto"):
        return ACTIVE_BACKEND, kernels
    if name == "python":
        return "python", _kernels_py
    if name == "cython":
        if _cy is None:
            raise ImportError("compiled kernels are not built")
        return "cython", _cy
    raise ValueError(f"unknown kernel backend {name!r}")
