"""Hot kernels: compiled extension when built, numpy fallback otherwise.

Set ``GEOFLOW_PURE_PYTHON=1`` to force the fallback.
"""
import os

from . import raster_py

if os.environ.get("GEOFLOW_PURE_PYTHON", "") not in ("", "0"):
    _compiled = None
else:
    try:
        from . import _raster as _compiled
    except ImportError:
        _compiled = None

BACKEND = "compiled" if _compiled is not None else "python"
rasterize = _compiled.rasterize if _compiled is not None else raster_py.rasterize
