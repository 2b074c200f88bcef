"""Provenance instrumentation and cost-based optimization over a
bag-semantics relational algebra."""

__version__ = "0.1.0"
