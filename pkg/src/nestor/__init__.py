"""Classical and emulated-quantum multilevel estimators for repeatedly nested expectations."""

__version__ = "0.1.0"
