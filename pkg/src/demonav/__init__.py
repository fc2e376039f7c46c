"""Demo-conditioned maze navigation benchmark and attention-based SAC trainer."""

__version__ = "0.1.0"
