"""Analysis and simulation of closed-loop reset control systems."""

__version__ = "0.1.0"
