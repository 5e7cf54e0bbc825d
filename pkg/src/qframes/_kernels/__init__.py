"""Hot per-slot kernels, compiled when available.

Set ``QFRAMES_PURE_PYTHON=1`` to force the numpy fallback.
"""
import os

from . import _pykernels as python

if os.environ.get("QFRAMES_PURE_PYTHON"):
    compiled = None
else:
    try:
        from . import _ckernels as compiled
    except ImportError:  # extension not built
        compiled = None

_active = compiled if compiled is not None else python

BACKEND = _active.BACKEND
prepare_slots = _active.prepare_slots
detect_slots = _active.detect_slots
drift_walk = _active.drift_walk

__all__ = ["BACKEND", "compiled", "python", "prepare_slots", "detect_slots", "drift_walk"]
