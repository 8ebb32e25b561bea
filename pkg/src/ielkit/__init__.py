"""Desk-scale toolkit for inverse-evolution regularization, frequency
fusion of multi-scale features, and a synthetic street-scene benchmark.
"""

__version__ = "0.1.0"
