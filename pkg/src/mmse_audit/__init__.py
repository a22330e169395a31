"""Finite-sample lower bounds on the MMSE of inferring a binary attribute from noised features."""

__version__ = "0.1.0"
