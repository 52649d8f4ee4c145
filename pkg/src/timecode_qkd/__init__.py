"""Monte Carlo simulation and statistical analysis of time-coding QKD."""

__version__ = "0.1.0"
