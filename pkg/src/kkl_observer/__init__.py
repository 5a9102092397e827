"""Learned KKL observers: physics-informed forward map, supervised inverse map."""

__version__ = "0.1.0"
