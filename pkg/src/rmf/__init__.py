"""Risk measurement harness for data-poisoning attacks on a small image classifier."""

__version__ = "0.1.0"
