"""Data-driven distributionally robust optimal control with polynomial chaos."""

__version__ = "0.1.0"
