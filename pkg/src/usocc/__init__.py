"""Occupancy networks over ultrasound acoustic features, trained from simulated multiview sweeps."""

__version__ = "0.1.0"
