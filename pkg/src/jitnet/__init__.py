"""Just-in-time request/response scheduling over TDMA and CSMA MACs."""

__version__ = "0.1.0"
