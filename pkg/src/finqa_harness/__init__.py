"""Numerical question answering over financial-report tables, with an evaluation harness."""

__version__ = "0.1.0"
