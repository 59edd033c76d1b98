"""Oriented percolation in columnar random environments, multiscale block
machinery, generalised contact processes and the couplings between them."""

__version__ = "0.1.0"
