"""Selects the compiled AL kernel when available, else the numpy fallback.

Set ``FOGEE_PURE_PYTHON=1`` to force the fallback.
"""
import os

from . import _alkernel_py

BACKEND = "python"
al_value_grad = _alkernel_py.al_value_grad

if os.environ.get("FOGEE_PURE_PYTHON", "") not in ("1", "true", "yes"):
    try:
        from . import _alkernel
    except ImportError:  # extension not built
        pass
    else:
        al_value_grad = _alkernel.al_value_grad
        BACKEND = "cython"
