"""Sandboxed executor for generated world-model code, behind a JSON line protocol."""

from wmrunner.server import ModelHost, main, serve

__all__ = ["ModelHost", "main", "serve"]
__version__ = "0.1.0"
