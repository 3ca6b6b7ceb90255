"""Interaction-aware car-following: intensity quantification, IDM calibration
and switching control on trajectory pairs."""

__version__ = "0.1.0"
