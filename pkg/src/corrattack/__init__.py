"""Correlation-aware adversarial attacks and defenses for time-series classifiers."""

__version__ = "0.1.0"
