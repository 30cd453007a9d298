"""Equidistribution of Hardy sequences on tori and nilmanifolds."""

__version__ = "0.1.0"
