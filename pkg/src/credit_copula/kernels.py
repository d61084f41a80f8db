"""Pick the compiled kernels when built, else the NumPy fallback.

Set ``CREDIT_COPULA_PURE_PYTHON=1`` to force the fallback.
"""
import os

from . import _kernels_py as python_backend

compiled_backend = None
if os.environ.get("CREDIT_COPULA_PURE_PYTHON", "") in ("", "0"):
    try:
        from . import _kernels as compiled_backend
    except ImportError:
        compiled_backend = None

_impl = compiled_backend if compiled_backend is not None else python_backend
BACKEND = "cython" if compiled_backend is not None else "python"

contract_portfolio_losses = _impl.contract_portfolio_losses
copula_bin_counts = _impl.copula_bin_counts
