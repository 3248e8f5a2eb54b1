"""Change detection toolkit for bitemporal multispectral image pairs."""

__version__ = "0.1.0"
