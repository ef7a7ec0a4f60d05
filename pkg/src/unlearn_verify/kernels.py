"""Backend selection for the hot kernels.

The compiled ``_ckernels`` extension is preferred; the pure-Python twin in
``_pykernels`` is used when the extension is missing or when
``UNLEARN_VERIFY_PURE_PYTHON=1`` is set before import.
"""

import os

from . import _pykernels as python_backend

compiled_backend = None
if os.environ.get("UNLEARN_VERIFY_PURE_PYTHON", "") not in ("1", "true", "yes"):
    try:
        from . import _ckernels as compiled_backend
    except ImportError:
        compiled_backend = None

backend = compiled_backend if compiled_backend is not None else python_backend
BACKEND = backend.BACKEND

log_pmf = backend.log_pmf
log_sum_range = backend.log_sum_range
log_cdf = backend.log_cdf
log_sf = backend.log_sf
threshold = backend.threshold
log_beta = backend.log_beta
thresholds_many = backend.thresholds_many
log_cdf_many = backend.log_cdf_many
BitGraph = backend.BitGraph

__all__ = [
    "BACKEND", "BitGraph", "backend", "compiled_backend", "log_beta", "log_cdf",
    "log_cdf_many", "log_pmf", "log_sf", "log_sum_range", "python_backend",
    "threshold", "thresholds_many",
]
