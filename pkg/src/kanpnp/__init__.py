"""Plug-and-play ADMM with single-instance KAN priors."""

__version__ = "0.1.0"
