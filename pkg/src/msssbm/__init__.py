"""Multi-subject Markov-switching stochastic block models for dynamic networks."""

__version__ = "0.1.0"
