"""Numerical toolkit for pose-guided motion copy.

Entropic Gromov-Wasserstein sequence loss, episodic replay scheduling,
face vector-field enhancement, mask compositing, and image metrics.
"""

from ._kernels import backend
from .errors import (
    ConfigError, DataError, FaceNotExtractable, MotionCopyError, NumericalDomainError,
)

__version__ = "0.1.0"

__all__ = [
    "backend", "ConfigError", "DataError", "FaceNotExtractable", "MotionCopyError",
    "NumericalDomainError", "__version__",
]
