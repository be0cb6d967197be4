"""Binary quadratic minimization with a discretized coupling matrix."""

__version__ = "0.1.0"
