"""Estimation and concentration certificates for slow-mixing context-tree Markov channels."""

__version__ = "0.1.0"
