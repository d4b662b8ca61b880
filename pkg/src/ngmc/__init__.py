"""Placement planning for a relocatable 5G cell under the UMa LoS channel model."""

__version__ = "0.1.0"
