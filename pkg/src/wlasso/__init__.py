"""Whitened LASSO variable selection for multivariate linear models with dependent responses."""

__version__ = "0.1.0"
