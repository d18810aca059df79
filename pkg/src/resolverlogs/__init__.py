"""Federated aggregation and mining of linking-server usage logs."""

__version__ = "0.1.0"
