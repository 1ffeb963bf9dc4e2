"""Joint-sparse recovery from multiple measurement vectors by fusing participating algorithms."""

__version__ = "0.1.0"
