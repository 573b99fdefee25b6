"""Test-time adaptation of a small text classifier by marginal entropy minimisation."""

__version__ = "0.1.0"
