"""Sequential target search on trees of data streams with confidence-bound random walks."""

__version__ = "0.1.0"
