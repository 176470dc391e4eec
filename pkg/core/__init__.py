"""
Core module for hedgekit - Cross-asset portfolio hedging toolkit.
Contains the risk model, the dense QP solver, spectral checks, hedging problems,
delta-method variance and the bond and CDS index risk models.
"""

__version__ = "1.0.0"
__author__ = "hedgekit Team"
