"""Robustness transfer from pretrained representations to linear heads."""
__version__ = "0.1.0"
