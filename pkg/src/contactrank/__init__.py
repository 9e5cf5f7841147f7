"""Hierarchical operational-space arm control with learned contact priorities."""

__version__ = "0.1.0"
