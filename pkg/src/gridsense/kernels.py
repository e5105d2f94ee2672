"""Kernel backend selection.

The compiled extension is used when it was built; otherwise, or when
``GRIDSENSE_PURE_PYTHON=1`` is set, the NumPy fallback is used.
"""

import os

from . import _kernels_py

BACKEND = "python"
em_integrate = _kernels_py.em_integrate

if os.environ.get("GRIDSENSE_PURE_PYTHON", "") not in ("1", "true", "yes"):
    try:
        from . import _kernels as _compiled
    except ImportError:  # extension not built
        _compiled = None
    if _compiled is not None:
        BACKEND = "cython"
        em_integrate = _compiled.em_integrate


def get_backend(name: str | None = None):
    """Return the ``em_integrate`` implementation for ``name`` (``cython``/``python``)."""
    if name is None:
        return em_integrate
    if name == "python":
        return _kernels_py.em_integrate
    if name == "cython":
        from . import _kernels

        return _kernels.em_integrate
    raise ValueError(f"unknown backend {name!r}")
