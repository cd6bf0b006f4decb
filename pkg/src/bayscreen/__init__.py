"""Active-learning citation screening engine for systematic reviews."""

__version__ = "0.1.0"
