"""Selection of the training inner-loop implementation.

The hot per-sample forward/backward pass has two implementations: a
compiled Cython kernel (built at install time when a compiler is
available) and the pure-Python tape engine.  The kernel is picked at
import when present; ``ADVEMB_BACKEND=python`` forces the fallback and
``ADVEMB_BACKEND=cython`` makes a missing kernel an error.
"""

from __future__ import annotations

import os

try:
    from . import _kernels  # type: ignore[attr-defined]
except ImportError:
    _kernels = None

_choice = os.environ.get("ADVEMB_BACKEND", "auto").lower()
if _choice not in ("auto", "python", "cython"):
    raise RuntimeError(f"ADVEMB_BACKEND must be auto, python or cython, not {_choice!r}")
if _choice == "cython" and _kernels is None:
    raise RuntimeError("ADVEMB_BACKEND=cython but the compiled kernels are not available")

_ACTIVE = "cython" if (_kernels is not None and _choice != "python") else "python"


def active_backend() -> str:
    """Name of the backend the trainer will use where the kernel applies."""
    return _ACTIVE


def kernels():
    """The compiled kernel module, or None when running pure Python."""
    return _kernels if _ACTIVE == "cython" else None
