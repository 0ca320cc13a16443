"""negspace: negative-label OOD detection over precomputed embedding spaces."""

__version__ = "0.1.0"
