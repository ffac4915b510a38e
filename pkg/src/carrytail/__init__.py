"""Tail-dependence analysis of currency carry-trade baskets."""

__version__ = "0.1.0"
