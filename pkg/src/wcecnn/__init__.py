"""Small-intestine motility frame classification with from-scratch numpy CNNs."""

__version__ = "0.1.0"
