"""Online goal recognition from precomputed trajectory and plan banks."""

__version__ = "0.1.0"
