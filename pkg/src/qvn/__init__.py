"""Stored-program quantum computer simulator built on channel-state duality."""

__version__ = "0.1.0"
