"""Facial expression recognition with saliency-weighted face crops."""
__version__ = "0.1.0"
