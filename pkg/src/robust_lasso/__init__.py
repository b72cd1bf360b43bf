"""Robust sparse linear regression under adversarial output contamination."""
__version__ = '0.1.0'
