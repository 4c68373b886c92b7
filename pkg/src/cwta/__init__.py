"""Weighted trajectory analysis of combined efficacy and toxicity outcomes."""

__version__ = "0.1.0"
