"""Backend selection for the Green-kernel hot loops.

The compiled extension is used when it was built; otherwise, or when the
environment variable ``ALEXSURF_PURE_PYTHON`` is set to a non-empty value,
the numpy reference implementation is used. Both expose the same three
functions.
"""

import os

from . import _kernels_py

if os.environ.get("ALEXSURF_PURE_PYTHON"):
    _impl = _kernels_py
    BACKEND = "python"
else:
    try:
        from . import _kernels as _impl  # type: ignore[attr-defined]
        BACKEND = "compiled"
    except ImportError:  # extension not built
        _impl = _kernels_py
        BACKEND = "python"

sphere_green_sum = _impl.sphere_green_sum
torus_green_sum = _impl.torus_green_sum
torus_green_diff = _impl.torus_green_diff

__all__ = ["BACKEND", "sphere_green_sum", "torus_green_sum", "torus_green_diff"]
