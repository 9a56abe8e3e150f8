"""Conformal price-interval tracking and risk-averse storage arbitrage."""

__version__ = "0.1.0"
