"""Online learning of time-varying graphs from streaming smooth signals."""

__version__ = "0.1.0"
