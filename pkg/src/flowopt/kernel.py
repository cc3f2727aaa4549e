"""Execution backend selection.

The compiled kernel (flowopt._kernel, built from _kernel.pyx) is used
when the extension imported successfully; otherwise the pure-Python twin
takes over. Setting FLOWOPT_PURE=1 forces the fallback, which is mainly
useful for benchmarking and for debugging kernel discrepancies.
"""

from __future__ import annotations

import os

from . import _kernel_py

try:
    from . import _kernel  # type: ignore[attr-defined]
except ImportError:  # pragma: no cover - depends on the build environment
    _kernel = None

__all__ = ["available_backends", "default_backend", "get_backend"]


def available_backends() -> tuple[str, ...]:
    return ("c", "python") if _kernel is not None else ("python",)


def default_backend() -> str:
    if os.environ.get("FLOWOPT_PURE", "") not in ("", "0"):
        return "python"
    return "c" if _kernel is not None else "python"


def get_backend(name: str | None = None):
    """Return the kernel module for ``name`` (default: best available)."""
    name = name or default_backend()
    if name == "python":
        return _kernel_py
    if name == "c":
        if _kernel is None:
            raise RuntimeError("the compiled kernel is not available in this install")
        return _kernel
    raise ValueError(f"unknown kernel backend {name!r}; use 'c' or 'python'")
