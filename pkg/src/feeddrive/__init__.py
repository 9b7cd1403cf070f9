"""Ball-screw feed drive simulation, servo tuning and motor-capacity sweeps."""

__version__ = "0.1.0"
