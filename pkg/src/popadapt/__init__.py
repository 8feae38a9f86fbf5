"""Population-aware multi-source hierarchical Bayesian domain adaptation."""

__version__ = "0.1.0"
