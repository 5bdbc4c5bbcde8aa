"""Nearest-neighbour eigenvalue spacing statistics of random matrices."""
__version__ = "0.1.0"
