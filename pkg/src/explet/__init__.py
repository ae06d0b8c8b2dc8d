"""Expressionlet pipeline: dense spatio-temporal features, GMM-based
alignment, covariance pooling on the SPD manifold, discriminant embedding,
and a Fisher vector baseline, with a synthetic evaluation harness."""

__version__ = "0.1.0"

from .kernels import BACKEND as kernel_backend  # noqa: F401
