"""Age-of-Information analysis of sidelink semi-persistent scheduling under resource starvation."""

__version__ = "0.1.0"
