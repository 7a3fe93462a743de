"""Finite pointed metric measure spaces: distances, lower mass functions,
excursion trees and convergence experiments."""

__version__ = "0.1.0"
