"""Neurosymbolic prior injection for deep Q-learning on a pixel grid game."""

__version__ = "0.1.0"
