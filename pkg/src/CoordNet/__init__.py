"""CoordNet package init."""

__all__ = ["Embedding", "Network"]
