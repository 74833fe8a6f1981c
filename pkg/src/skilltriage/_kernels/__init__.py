"""Hot scoring kernels with a compiled core and a pure-Python fallback.

The compiled extension is preferred when importable; set the environment
variable ``SKILLTRIAGE_PURE_PYTHON=1`` to force the fallback (used by the
kernel benchmark and by tests that compare both backends).
"""

from __future__ import annotations

import os

if os.environ.get("SKILLTRIAGE_PURE_PYTHON"):
    from ._fallback import levenshtein, min_levenshtein, shannon_entropy_bits

    KERNEL_BACKEND = "python"
else:
    try:
        from ._speedups import levenshtein, min_levenshtein, shannon_entropy_bits

        KERNEL_BACKEND = "cython"
    except ImportError:
        from ._fallback import levenshtein, min_levenshtein, shannon_entropy_bits

        KERNEL_BACKEND = "python"

__all__ = ["KERNEL_BACKEND", "levenshtein", "min_levenshtein", "shannon_entropy_bits"]
