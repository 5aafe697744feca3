"""Regularised light-cone kernels, closed-chain spectra and tangent-space integrals on curved charts."""
from .geometry import CATALOGUE, MetricChart, make_chart

__all__ = ["CATALOGUE", "MetricChart", "make_chart", "__version__"]
__version__ = "0.1.0"
