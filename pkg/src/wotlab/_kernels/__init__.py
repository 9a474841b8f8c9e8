"""Hot kernels with a compiled backend and a pure-Python fallback.

The compiled extension is used when it imports and the environment
variable ``WOTLAB_PURE_PYTHON`` is unset (or ``0``).  ``BACKEND`` names
the backend actually selected.
"""

from __future__ import annotations

import os

from . import _pykernels

BACKEND = "python"

if os.environ.get("WOTLAB_PURE_PYTHON", "0") in ("", "0"):
    try:
        from ._ctransport import transport_simplex
        from ._csinkhorn import sinkhorn_log

        BACKEND = "cython"
    except ImportError:
        transport_simplex = _pykernels.transport_simplex
        sinkhorn_log = _pykernels.sinkhorn_log
else:
    transport_simplex = _pykernels.transport_simplex
    sinkhorn_log = _pykernels.sinkhorn_log


def available_backends():
    """Names of the importable backends, compiled one last."""
    names = ["python"]
    try:
        from . import _ctransport, _csinkhorn  # noqa: F401

        names.append("cython")
    except ImportError:
        pass
    return names


def get_backend(name):
    """Return ``(transport_simplex, sinkhorn_log)`` for the named backend."""
    if name == "python":
        return _pykernels.transport_simplex, _pykernels.sinkhorn_log
    if name == "cython":
        from ._csinkhorn import sinkhorn_log as sk
        from ._ctransport import transport_simplex as ts

        return ts, sk
    raise ValueError(f"unknown backend {name!r}")


__all__ = ["BACKEND", "transport_simplex", "sinkhorn_log", "available_backends", "get_backend"]
