"""Interaction-network quality, HelpNeed classification and prediction, and adaptive hint policy."""

__version__ = "0.1.0"
