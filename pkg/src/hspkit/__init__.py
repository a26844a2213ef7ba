"""Toolkit for measuring hyper-specific prefixes in BGP route-collector data."""

__version__ = "0.1.0"
