"""Micro-macro simulation toolkit for benthic algae population dynamics."""

__version__ = "1.0.0"
