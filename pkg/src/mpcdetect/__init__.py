"""Multipath component detection in power delay profiles with reconstruction
autoencoders and two-pass DBSCAN."""

__version__ = "0.1.0"
