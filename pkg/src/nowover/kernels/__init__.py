"""Hot numeric kernels with a numba path and a pure-numpy fallback.

The backend is chosen once at import time. Set ``NOWOVER_DISABLE_NUMBA=1`` to
force the numpy fallback (numba is also skipped when it is not installed).
``get_backend`` returns either backend explicitly, which tests and the
benchmark use to compare the two.
"""

import os
from types import SimpleNamespace

from . import _numpy

__all__ = ["BACKEND", "get_backend", "walk_path", "walk_endpoints", "cut_table"]


def _numba_backend():
    from . import _numba

    return SimpleNamespace(
        name="numba",
        walk_path=_numba.walk_path,
        walk_endpoints=_numba.walk_endpoints,
        cut_table=_numba.cut_table,
    )


_NUMPY = SimpleNamespace(
    name="numpy",
    walk_path=_numpy.walk_path,
    walk_endpoints=_numpy.walk_endpoints,
    cut_table=_numpy.cut_table,
)


def numba_available() -> bool:
    try:
        import numba  # noqa: F401
    except ImportError:
        return False
    return True


def get_backend(name: str | None = None):
    """Return the kernel namespace for ``name`` ("numba" or "numpy")."""
    if name is None:
        name = BACKEND
    if name == "numpy":
        return _NUMPY
    if name == "numba":
        return _numba_backend()
    raise ValueError(f"unknown kernel backend {name!r}")


def _select() -> str:
    if os.environ.get("NOWOVER_DISABLE_NUMBA", "").strip() not in ("", "0"):
        return "numpy"
    return "numba" if numba_available() else "numpy"


BACKEND = _select()
_active = get_backend(BACKEND)
walk_path = _active.walk_path
walk_endpoints = _active.walk_endpoints
cut_table = _active.cut_table
