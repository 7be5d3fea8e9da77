"""Kernel dispatch: compiled extension when importable, pure Python otherwise.

Set ``MULTIFID_PURE_PYTHON=1`` to force the fallback.
"""
import os

from . import _kernels_py

if os.environ.get("MULTIFID_PURE_PYTHON", "") not in ("", "0"):
    _impl = _kernels_py
else:
    try:
        from . import _kernels as _impl
    except ImportError:  # extension not built
        _impl = _kernels_py

BACKEND = _impl.BACKEND
project_points = _impl.project_points
lookahead_point = _impl.lookahead_point
pure_pursuit = _impl.pure_pursuit
interp_time = _impl.interp_time
hifi_integrate = _impl.hifi_integrate
