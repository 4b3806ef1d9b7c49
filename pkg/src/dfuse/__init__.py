"""Distributed detection of a non-cooperative target from one-bit sensor reports."""

__version__ = "0.1.0"
