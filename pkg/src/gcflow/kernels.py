"""Backend selection for the hot predictor-corrector step.

The compiled extension is used when importable; set GCFLOW_PURE=1 to force
the numpy fallback.
"""
import os

from . import _kernels_py

BACKEND = "numpy"
pc_step = _kernels_py.pc_step

if os.environ.get("GCFLOW_PURE", "") not in ("1", "true", "yes"):
    try:
        from . import _ckernels
    except ImportError:  # extension not built
        pass
    else:
        pc_step = _ckernels.pc_step
        BACKEND = "cython"

__all__ = ["BACKEND", "pc_step"]
