"""Benchmarking causal discovery by the treatment-effect distributions it implies."""

__version__ = "0.1.0"

from .errors import AteBenchError

__all__ = ["AteBenchError", "__version__"]
