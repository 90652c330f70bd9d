"""Detect adversarial images by perturbing their least significant PCA coefficients."""

__version__ = "0.1.0"
