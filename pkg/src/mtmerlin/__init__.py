"""Self-supervised multi-temporal SAR despeckling toolkit."""
__version__ = "0.1.0"
