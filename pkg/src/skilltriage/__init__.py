"""Layered triage of AI agent skill packages.

Layer 1 scores each package with zero-cost static checks; suspicious
packages get a four-way decomposed semantic analysis (layer 2); the
highest-risk cases go before a three-model jury with structured debate
(layer 3). Nothing from a skill package is ever executed.
"""

from ._kernels import KERNEL_BACKEND
from .report import TOOL_VERSION as __version__

__all__ = ["KERNEL_BACKEND", "__version__"]
