"""Paired-exposure Retinex low-light image enhancement."""

__version__ = "0.1.0"
