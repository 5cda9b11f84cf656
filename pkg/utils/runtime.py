"""
Thread caps for BLAS and worker pools, read from GEOMOE_THREADS.

`apply_thread_limits()` must run before numpy is first imported to affect
BLAS; run_crmf.py calls it at the top of the script.
"""

import os

THREADS_ENV = "GEOMOE_THREADS"
_BLAS_VARS = ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS",
              "VECLIB_MAXIMUM_THREADS", "NUMEXPR_NUM_THREADS")


def worker_count(default: int = 1) -> int:
    """Workers allowed by GEOMOE_THREADS (falls back to `default`)."""
    raw = os.environ.get(THREADS_ENV, "").strip()
    if not raw:
        return max(int(default), 1)
    try:
        value = int(raw)
    except ValueError:
        raise ValueError(f"{THREADS_ENV} must be a positive integer, got {raw!r}")
    if value < 1:
        raise ValueError(f"{THREADS_ENV} must be a positive integer, got {raw!r}")
    return value


def apply_thread_limits():
    """Export GEOMOE_THREADS to the BLAS thread variables not already set."""
    if not os.environ.get(THREADS_ENV, "").strip():
        return
    n = str(worker_count())
    for var in _BLAS_VARS:
        os.environ.setdefault(var, n)
