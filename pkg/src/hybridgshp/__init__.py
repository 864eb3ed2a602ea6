"""Sizing, cost optimization and dynamic simulation of hybrid ground/air-source
heat pump systems for district energy nodes."""

__version__ = "0.1.0"

from ._kernels import BACKEND  # noqa: E402

__all__ = ["__version__", "BACKEND"]
