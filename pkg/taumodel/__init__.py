"""Chain matrix models: partition functions, truncated Fock-space evaluation and tau-function flows."""

__version__ = "0.1.0"
