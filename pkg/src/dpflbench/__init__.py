"""Desk-scale benchmark of DP training, federated learning and DP-FL for text classification."""

__version__ = "0.1.0"
