"""Device-bound encryption of neural-network weights with PUF-derived keys."""

__version__ = "0.1.0"
