"""Heat kernel diagnostics for random walks on finite metric measure spaces."""

__version__ = "0.1.0"
