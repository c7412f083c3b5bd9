"""Plotting companion for gmbridge CSV artifacts."""

from .plots import SchemaError, plot_convergence, plot_figure1

__all__ = ["SchemaError", "plot_figure1", "plot_convergence"]
__version__ = "0.1.0"
