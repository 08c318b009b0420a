"""Rate-splitting multiple access toolkit: finite-blocklength precoder
optimization and ergodic-rate simulation under user mobility."""

__version__ = "0.1.0"
