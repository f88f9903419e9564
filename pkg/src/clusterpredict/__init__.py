"""Cluster-then-predict regression of load values from scattering features."""

__version__ = "0.1.0"
