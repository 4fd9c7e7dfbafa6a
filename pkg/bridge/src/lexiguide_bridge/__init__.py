"""Reference server for the scorer wire protocol."""

__version__ = "0.1.0"
