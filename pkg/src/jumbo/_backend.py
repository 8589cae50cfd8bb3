"""Select the Gram-matrix implementation at import time.

The compiled extension is preferred. Set ``JUMBO_BACKEND=python`` to force the
numpy fallback (useful for debugging and for the backend benchmark).
"""
import os

from . import _kernels_py

BACKEND = "python"
gram = _kernels_py.gram
gram_with_grad = _kernels_py.gram_with_grad

if os.environ.get("JUMBO_BACKEND", "").lower() != "python":
    try:
        from . import _kernels_cy
    except ImportError:
        pass
    else:
        BACKEND = "cython"
        gram = _kernels_cy.gram
        gram_with_grad = _kernels_cy.gram_with_grad
