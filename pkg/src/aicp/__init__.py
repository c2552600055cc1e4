"""Active invariant causal prediction."""

__version__ = "0.1.0"
