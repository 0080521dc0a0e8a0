"""Deep synoptic Monte Carlo planning for reconnaissance blind chess."""

__version__ = "0.1.0"
