"""Excavation-event detection for distributed acoustic sensing streams."""
__version__ = "0.1.0"
