"""Hot loops: compiled extension when available, numpy mirror otherwise.

Set ``DEFECTGAS_PURE_PYTHON=1`` to force the fallback.
"""

import os

from . import _pykernels

_impl = None
if os.environ.get("DEFECTGAS_PURE_PYTHON", "") not in ("1", "true", "yes"):
    try:
        from . import _ckernels as _impl
    except ImportError:  # extension not built
        _impl = None

BACKEND = "cython" if _impl is not None else "python"
if _impl is None:
    _impl = _pykernels

field_marks = _impl.field_marks
free_path_batch = _impl.free_path_batch
first_entry_batch = _impl.first_entry_batch
count_batch = _impl.count_batch


def backend_module(name=None):
    """The kernel module for ``name`` in {"cython", "python"} (default: the active one)."""
    if name is None:
        return _impl
    if name == "python":
        return _pykernels
    if name == "cython":
        from . import _ckernels

        return _ckernels
    raise ValueError(f"unknown backend {name!r}")
