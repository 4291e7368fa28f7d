"""Newton-Raphson load flow, loss analysis, grid strategies and GA-based loss minimisation."""

__version__ = "0.1.0"
