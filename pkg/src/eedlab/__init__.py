"""eedlab: empirical equivariance deviation metrics for finite symmetry groups."""

__version__ = "0.1.0"
