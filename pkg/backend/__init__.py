"""
Online world-model learning backend: sparse encoders, FTL learners, environments, Dyna
"""

__version__ = "0.3.0"
