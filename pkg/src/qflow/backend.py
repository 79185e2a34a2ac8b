"""Kernel backend selection.

The compiled Cython kernels are preferred when importable; the NumPy
implementation is the fallback. QFLOW_BACKEND=python|compiled forces a
choice (forcing "compiled" raises if the extension is missing, instead of
silently downgrading).
"""

from __future__ import annotations

import os

from . import kernels_py

_forced = os.environ.get("QFLOW_BACKEND", "").strip().lower()

if _forced == "python":
    kernels = kernels_py
elif _forced == "compiled":
    from . import _kernels as kernels  # noqa: F401
else:
    try:
        from . import _kernels as kernels  # type: ignore[no-redef]
    except ImportError:
        kernels = kernels_py

backend_name: str = kernels.backend_name

_num_threads = 1


def set_num_threads(k: int) -> None:
    global _num_threads
    if k < 1:
        raise ValueError("thread count must be >= 1")
    _num_threads = int(k)


def get_num_threads() -> int:
    return _num_threads
