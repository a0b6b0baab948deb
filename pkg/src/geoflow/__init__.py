"""Geodesic-flow cross-view adaptation with a synthetic car/drone benchmark."""
from .runtime import cap_blas_threads

cap_blas_threads()

__version__ = "0.1.0"
