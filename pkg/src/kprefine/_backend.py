"""Kernel backend selection.

The compiled extension is preferred when importable; set
``KPREFINE_BACKEND=python`` to force the NumPy fallback or
``KPREFINE_BACKEND=cython`` to require the extension (ImportError if it was
not built). Both backends implement the same contract, see
``_kernels_np.py``.
"""

from __future__ import annotations

import os

from . import _kernels_np

_requested = os.environ.get("KPREFINE_BACKEND", "auto").lower()

if _requested in ("auto", "cython"):
    try:
        from . import _ckernels as _impl
    except ImportError:
        if _requested == "cython":
            raise
        _impl = _kernels_np
elif _requested in ("python", "numpy"):
    _impl = _kernels_np
else:
    raise ValueError(
        f"KPREFINE_BACKEND={_requested!r}; expected auto, cython or python"
    )

BACKEND_NAME: str = _impl.BACKEND_NAME
kde_accumulate = _impl.kde_accumulate
em_pair_terms = _impl.em_pair_terms
em_moments = _impl.em_moments
em_spread = _impl.em_spread


def get_backend(name: str | None = None):
    """Return a kernel module by name (None -> the active one)."""
    if name is None:
        return _impl
    if name in ("python", "numpy"):
        return _kernels_np
    if name == "cython":
        from . import _ckernels
        return _ckernels
    raise ValueError(f"unknown backend {name!r}")
