"""Probabilistic multiparty sessions: parsing, typing, execution and queries."""

__version__ = "0.1.0"
