"""Randomly shifted decorated Poisson point processes: overlaps, temperature
susceptibility and the supporting exact and Monte-Carlo machinery."""

__version__ = "0.1.0"
