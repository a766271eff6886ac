"""Desk-scale discrete-token ASR workbench."""

__version__ = "0.1.0"
