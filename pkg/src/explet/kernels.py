"""Kernel backend selection.

Prefers the compiled extension; falls back to the numpy implementations.
Set EXPLET_PURE_PYTHON=1 to force the fallback (used by the benchmark and
the parity tests).
"""

import os

from . import _pykernels

if os.environ.get("EXPLET_PURE_PYTHON"):
    _impl = _pykernels
    BACKEND = "pure"
else:
    try:
        from . import _native as _impl
        BACKEND = "native"
    except ImportError:
        _impl = _pykernels
        BACKEND = "pure"

sift_hist = _impl.sift_hist
hog_frame_hist = _impl.hog_frame_hist
svm_dual_cd = _impl.svm_dual_cd
spatial_gradients = _pykernels.spatial_gradients
